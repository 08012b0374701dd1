from __future__ import annotations

import copy

import pytest

from splitsim.profiles import Profile, load_profile, profile_from_dict

# A three-layer toy model: 2 frequencies x 3 TPU modes x 2 GPU options x 4 split points.
TINY = {
    "model": {"id": "tiny", "layers": 3, "output_bytes": [60000, 120000, 30000, 400]},
    "search_space": {"cpu_grid_ghz": [0.6, 1.8], "tpu_modes": ["off", "std", "max"],
                     "gpu_options": [False, True]},
    "edge": {"reference_freq_ghz": 1.8, "prepare_s": 0.004, "decode_s": 0.001,
             "layer_s": [0.02, 0.05, 0.01], "tpu_speedup": [4.0, 4.0, 1.5]},
    "cloud": {"gpu_layer_s": [0.002, 0.004, 0.001], "cpu_layer_s": [0.01, 0.03, 0.005],
              "fixed_s": {"cpu": 0.01, "gpu": 0.012}, "deserialize_s_per_mb": {"cpu": 0.001, "gpu": 0.0005}},
    "network": {"bandwidth_bytes_s": 12.5e6, "rtt_s": 0.02},
    "accuracy": {"base": 0.9, "max_penalty": 0.004, "exponent": 1.0, "quantized_modes": ["tpu"]},
    "device": {"tpu_idle_w": 0.3, "cloud_power_w": {"cpu": 300.0, "gpu": 450.0}},
    "workload": {"min_ms": 40.0, "max_ms": 400.0},
}


def tiny_doc(**section_updates) -> dict:
    doc = copy.deepcopy(TINY)
    for section, values in section_updates.items():
        doc.setdefault(section, {}).update(values)
    return doc


@pytest.fixture(scope="session")
def vgg() -> Profile:
    return load_profile("vgg16-like")


@pytest.fixture(scope="session")
def vit() -> Profile:
    return load_profile("vit-like")


@pytest.fixture(scope="session")
def tiny() -> Profile:
    return profile_from_dict(tiny_doc(), "tiny")
