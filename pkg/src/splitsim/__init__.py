"""Edge-cloud split inference: configuration search and QoS-aware scheduling on an emulated testbed."""

__version__ = "0.1.0"
