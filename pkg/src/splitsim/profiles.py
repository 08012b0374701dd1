"""Model and device cost profiles, loaded from TOML ``.profile`` files.

A profile file holds one partitionable model together with the device,
network, meter and overhead constants of the testbed it was calibrated
against. Units are part of every key name (``_s``, ``_w``, ``_bytes``,
``_ghz``, ``_ms``).
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .config_space import DEFAULT_CPU_GRID, SearchSpace, TpuMode

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

BUNDLED = ("vgg16-like", "vit-like")


class ProfileError(ValueError):
    """Raised for malformed or inconsistent profile files."""


@dataclass(frozen=True)
class AccuracyModel:
    base: float
    max_penalty: float = 0.0
    exponent: float = 1.0
    # Edge execution modes ("cpu", "tpu") that run the quantized head.
    quantized_modes: tuple[str, ...] = ()
    noise_sigma: float = 0.001

    def __post_init__(self) -> None:
        if not 0.0 <= self.base <= 1.0:
            raise ProfileError("accuracy.base must lie in [0, 1]")
        if not 0.0 <= self.max_penalty <= 0.01:
            raise ProfileError("accuracy.max_penalty must lie in [0, 0.01]")
        if self.exponent <= 0:
            raise ProfileError("accuracy.exponent must be positive")
        if self.noise_sigma < 0 or self.max_penalty + 3 * self.noise_sigma >= 0.01:
            raise ProfileError("accuracy penalty plus 3 noise sd must stay below one percentage point")
        bad = set(self.quantized_modes) - {"cpu", "tpu"}
        if bad:
            raise ProfileError(f"unknown quantized modes {sorted(bad)}")


@dataclass(frozen=True)
class ModelProfile:
    model_id: str
    n_layers: int
    edge_cpu_s: np.ndarray
    cloud_cpu_s: np.ndarray
    cloud_gpu_s: np.ndarray
    output_bytes: np.ndarray
    accuracy: AccuracyModel
    space: SearchSpace
    edge_tpu_speedup: np.ndarray | None = None
    reference_freq_ghz: float = 1.8
    edge_prepare_s: float = 0.005
    edge_decode_s: float = 0.001
    cloud_fixed_s: Mapping[str, float] = field(default_factory=lambda: {"cpu": 0.0, "gpu": 0.0})
    cloud_deserialize_s_per_mb: Mapping[str, float] = field(default_factory=lambda: {"cpu": 0.0, "gpu": 0.0})
    qos_bounds_ms: tuple[float, float] | None = None
    layer_names: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        L = self.n_layers
        for name in ("edge_cpu_s", "cloud_cpu_s", "cloud_gpu_s"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (L,):
                raise ProfileError(f"{name} needs {L} entries, got {arr.shape}")
            if np.any(arr <= 0):
                raise ProfileError(f"{name} must be strictly positive")
            object.__setattr__(self, name, arr)
        ob = np.asarray(self.output_bytes, dtype=float)
        if ob.shape != (L + 1,):
            raise ProfileError(f"output_bytes needs {L + 1} entries (index 0 = raw input), got {ob.shape}")
        if np.any(ob <= 0):
            raise ProfileError("output_bytes must be strictly positive")
        object.__setattr__(self, "output_bytes", ob)
        if self.edge_tpu_speedup is not None:
            sp = np.asarray(self.edge_tpu_speedup, dtype=float)
            if sp.shape != (L,) or np.any(sp <= 0):
                raise ProfileError(f"edge_tpu_speedup needs {L} positive entries")
            object.__setattr__(self, "edge_tpu_speedup", sp)
        if self.reference_freq_ghz <= 0 or self.edge_prepare_s <= 0 or self.edge_decode_s <= 0:
            raise ProfileError("reference frequency and fixed edge terms must be positive")
        for table in (self.cloud_fixed_s, self.cloud_deserialize_s_per_mb):
            if set(table) != {"cpu", "gpu"} or any(v < 0 for v in table.values()):
                raise ProfileError("cloud tables need non-negative 'cpu' and 'gpu' entries")
        if self.space.n_layers != L or self.space.model_id != self.model_id:
            raise ProfileError("search space does not match the model")
        if self.qos_bounds_ms is not None:
            lo, hi = self.qos_bounds_ms
            if not 0 < lo < hi:
                raise ProfileError("workload bounds need 0 < min_ms < max_ms")

    @property
    def tpu_permitted(self) -> bool:
        return self.edge_tpu_speedup is not None and "no-tpu" not in self.space.extra_constraints


@dataclass(frozen=True)
class DeviceProfile:
    # Edge node: active power = base + alpha * f**beta while computing,
    # idle-wait power = idle_base + idle_per_ghz * f while waiting on the cloud.
    edge_active_base_w: float = 2.0
    edge_active_alpha_w: float = 0.94
    edge_active_beta: float = 1.6
    edge_idle_base_w: float = 1.8
    edge_idle_per_ghz_w: float = 0.15
    tpu_power_w: Mapping[str, float] = field(default_factory=lambda: {"std": 1.0, "max": 1.1})
    tpu_idle_w: float = 0.0
    tpu_mode_speedup: Mapping[str, float] = field(default_factory=lambda: {"std": 1.0, "max": 1.0})
    # Cloud node: power while the tail segment is active.
    cloud_power_w: Mapping[str, float] = field(default_factory=lambda: {"cpu": 600.0, "gpu": 950.0})
    bandwidth_bytes_s: float = 12.5e6
    rtt_s: float = 0.03
    edge_meter_interval_s: float = 0.2
    cloud_meter_interval_s: float = 0.02
    latency_noise_sigma: float = 0.03
    # Overrides latency_noise_sigma for the edge component when set.
    edge_latency_noise_sigma: float | None = None
    # Controller overheads, in milliseconds.
    selection_base_ms: float = 1.5
    selection_per_entry_ms: float = 0.2
    selection_sigma: float = 0.3
    apply_ms: Mapping[str, float] = field(
        default_factory=lambda: {"frequency": 15.0, "tpu": 40.0, "head": 55.0, "cloud": 35.0}
    )
    apply_sigma: float = 0.35

    def __post_init__(self) -> None:
        powers = [self.edge_active_base_w, self.edge_active_alpha_w, self.edge_idle_base_w,
                  self.edge_idle_per_ghz_w, self.tpu_idle_w, *self.tpu_power_w.values(),
                  *self.cloud_power_w.values()]
        if any(p < 0 for p in powers):
            raise ProfileError("powers must be non-negative")
        if self.bandwidth_bytes_s <= 0 or self.rtt_s < 0:
            raise ProfileError("bandwidth must be positive and rtt non-negative")
        if self.edge_meter_interval_s <= 0 or self.cloud_meter_interval_s <= 0:
            raise ProfileError("meter intervals must be positive")
        sigmas = (self.latency_noise_sigma, self.edge_latency_noise_sigma or 0.0,
                  self.selection_sigma, self.apply_sigma)
        if any(s < 0 for s in sigmas):
            raise ProfileError("noise scales must be non-negative")
        if set(self.tpu_power_w) != {"std", "max"} or set(self.tpu_mode_speedup) != {"std", "max"}:
            raise ProfileError("TPU tables need 'std' and 'max' entries")
        if any(v <= 0 for v in self.tpu_mode_speedup.values()):
            raise ProfileError("TPU mode speedups must be positive")
        if set(self.cloud_power_w) != {"cpu", "gpu"}:
            raise ProfileError("cloud power table needs 'cpu' and 'gpu' entries")
        if set(self.apply_ms) != {"frequency", "tpu", "head", "cloud"}:
            raise ProfileError("apply_ms needs frequency, tpu, head and cloud entries")

    @property
    def latency_sigmas(self) -> tuple[float, float, float]:
        """Log-scale noise sd for the (edge, net, cloud) latency components."""
        s = self.latency_noise_sigma
        edge = s if self.edge_latency_noise_sigma is None else self.edge_latency_noise_sigma
        return (edge, s, s)

    def edge_active_w(self, freq_ghz: float) -> float:
        return self.edge_active_base_w + self.edge_active_alpha_w * freq_ghz ** self.edge_active_beta

    def edge_idle_w(self, freq_ghz: float) -> float:
        return self.edge_idle_base_w + self.edge_idle_per_ghz_w * freq_ghz


@dataclass(frozen=True)
class Profile:
    model: ModelProfile
    device: DeviceProfile
    source: str = ""

    @property
    def model_id(self) -> str:
        return self.model.model_id

    @property
    def space(self) -> SearchSpace:
        return self.model.space


def _table(doc: Mapping[str, Any], key: str) -> Mapping[str, Any]:
    value = doc.get(key, {})
    if not isinstance(value, Mapping):
        raise ProfileError(f"[{key}] must be a table")
    return value


def profile_from_dict(doc: Mapping[str, Any], source: str = "") -> Profile:
    try:
        model = _table(doc, "model")
        space = _table(doc, "search_space")
        edge = _table(doc, "edge")
        cloud = _table(doc, "cloud")
        net = _table(doc, "network")
        acc = _table(doc, "accuracy")
        dev = _table(doc, "device")
        meter = _table(doc, "meter")
        noise = _table(doc, "noise")
        overhead = _table(doc, "overhead")
        workload = _table(doc, "workload")

        model_id = str(model["id"])
        n_layers = int(model["layers"])
        search = SearchSpace(
            model_id=model_id,
            n_layers=n_layers,
            cpu_grid=tuple(space.get("cpu_grid_ghz", DEFAULT_CPU_GRID)),
            tpu_modes=tuple(TpuMode.parse(m) for m in space.get("tpu_modes", ["off", "std", "max"])),
            gpu_options=tuple(space.get("gpu_options", [False, True])),
            extra_constraints=tuple(space.get("constraints", [])),
        )
        accuracy = AccuracyModel(
            base=float(acc["base"]),
            max_penalty=float(acc.get("max_penalty", 0.0)),
            exponent=float(acc.get("exponent", 1.0)),
            quantized_modes=tuple(acc.get("quantized_modes", [])),
            noise_sigma=float(acc.get("noise_sigma", 0.001)),
        )
        bounds = None
        if "min_ms" in workload or "max_ms" in workload:
            bounds = (float(workload["min_ms"]), float(workload["max_ms"]))
        speedup = edge.get("tpu_speedup")
        mp = ModelProfile(
            model_id=model_id,
            n_layers=n_layers,
            layer_names=tuple(model.get("layer_names", [])),
            reference_freq_ghz=float(edge.get("reference_freq_ghz", 1.8)),
            edge_cpu_s=edge["layer_s"],
            edge_tpu_speedup=None if speedup is None else speedup,
            edge_prepare_s=float(edge.get("prepare_s", 0.005)),
            edge_decode_s=float(edge.get("decode_s", 0.001)),
            cloud_cpu_s=cloud["cpu_layer_s"],
            cloud_gpu_s=cloud["gpu_layer_s"],
            cloud_fixed_s=dict(cloud.get("fixed_s", {"cpu": 0.0, "gpu": 0.0})),
            cloud_deserialize_s_per_mb=dict(cloud.get("deserialize_s_per_mb", {"cpu": 0.0, "gpu": 0.0})),
            output_bytes=model["output_bytes"],
            accuracy=accuracy,
            space=search,
            qos_bounds_ms=bounds,
        )
        d = DeviceProfile()
        dp = DeviceProfile(
            edge_active_base_w=float(dev.get("edge_active_base_w", d.edge_active_base_w)),
            edge_active_alpha_w=float(dev.get("edge_active_alpha_w", d.edge_active_alpha_w)),
            edge_active_beta=float(dev.get("edge_active_beta", d.edge_active_beta)),
            edge_idle_base_w=float(dev.get("edge_idle_base_w", d.edge_idle_base_w)),
            edge_idle_per_ghz_w=float(dev.get("edge_idle_per_ghz_w", d.edge_idle_per_ghz_w)),
            tpu_power_w=dict(dev.get("tpu_power_w", d.tpu_power_w)),
            tpu_idle_w=float(dev.get("tpu_idle_w", d.tpu_idle_w)),
            tpu_mode_speedup=dict(dev.get("tpu_mode_speedup", d.tpu_mode_speedup)),
            cloud_power_w=dict(dev.get("cloud_power_w", d.cloud_power_w)),
            bandwidth_bytes_s=float(net.get("bandwidth_bytes_s", d.bandwidth_bytes_s)),
            rtt_s=float(net.get("rtt_s", d.rtt_s)),
            edge_meter_interval_s=float(meter.get("edge_interval_s", d.edge_meter_interval_s)),
            cloud_meter_interval_s=float(meter.get("cloud_interval_s", d.cloud_meter_interval_s)),
            latency_noise_sigma=float(noise.get("latency_sigma", d.latency_noise_sigma)),
            edge_latency_noise_sigma=(float(noise["edge_sigma"]) if "edge_sigma" in noise else None),
            selection_base_ms=float(overhead.get("selection_base_ms", d.selection_base_ms)),
            selection_per_entry_ms=float(overhead.get("selection_per_entry_ms", d.selection_per_entry_ms)),
            selection_sigma=float(overhead.get("selection_sigma", d.selection_sigma)),
            apply_ms=dict(overhead.get("apply_ms", d.apply_ms)),
            apply_sigma=float(overhead.get("apply_sigma", d.apply_sigma)),
        )
    except KeyError as exc:
        raise ProfileError(f"{source or 'profile'}: missing key {exc}") from None
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ProfileError):
            raise
        raise ProfileError(f"{source or 'profile'}: {exc}") from None
    return Profile(model=mp, device=dp, source=source)


def load_profile(ref: str | Path) -> Profile:
    """Load a profile from a path, or by bundled name (``vgg16-like``, ``vit-like``)."""
    path = Path(ref)
    if path.exists():
        with path.open("rb") as fh:
            doc = tomllib.load(fh)
        return profile_from_dict(doc, source=str(path))
    name = str(ref)
    if name.endswith(".profile"):
        name = name[: -len(".profile")]
    if name in BUNDLED:
        data = resources.files("splitsim.data").joinpath(f"{name}.profile").read_bytes()
        return profile_from_dict(tomllib.loads(data.decode("utf-8")), source=f"{name}.profile")
    raise ProfileError(f"no profile at {ref!r} and no bundled profile of that name")
