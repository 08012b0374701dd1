"""Stochastic testbed emulator: latency, power traces, energy and accuracy.

All latencies in ``LatencyBreakdown`` are per inference, in milliseconds.
A trial of ``n`` inferences is modelled as one batch: ``n`` head
inferences on the edge, one streamed transfer (a single round trip plus
``n`` payloads), ``n`` tail inferences on the cloud, then ``n`` result
decodes on the edge.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config_space import Configuration, TpuMode, is_feasible
from .energy import PiecewisePower, PowerSeries, integrate_energy
from .profiles import DeviceProfile, ModelProfile

NOISE_CLIP = 3.0
# Inferences per request, and per offline trial.
DEFAULT_BATCH = 1000


@dataclass(frozen=True)
class LatencyBreakdown:
    t_edge_ms: float
    t_net_ms: float
    t_cloud_ms: float

    def __post_init__(self) -> None:
        for name in ("t_edge_ms", "t_net_ms", "t_cloud_ms"):
            object.__setattr__(self, name, float(getattr(self, name)))

    @property
    def t_total_ms(self) -> float:
        return self.t_edge_ms + self.t_net_ms + self.t_cloud_ms


@dataclass(frozen=True)
class PhaseTimeline:
    """Phase boundaries of one batch, in seconds from t0 = 0.

    ``t_net1``/``t_net2`` are None for edge-only inference.
    """

    t0: float
    t_head: float
    t_net1: float | None
    t_net2: float | None
    t_inf: float
    edge: PiecewisePower
    cloud: PiecewisePower | None


@dataclass(frozen=True)
class PowerTrace:
    timeline: PhaseTimeline
    edge_series: PowerSeries
    cloud_series: PowerSeries


@dataclass(frozen=True)
class ObjectiveVector:
    latency_ms: float
    energy_j: float
    neg_accuracy: float

    def __post_init__(self) -> None:
        for name in ("latency_ms", "energy_j", "neg_accuracy"):
            object.__setattr__(self, name, float(getattr(self, name)))

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.latency_ms, self.energy_j, self.neg_accuracy)

    @property
    def accuracy(self) -> float:
        return -self.neg_accuracy


@dataclass(frozen=True)
class Observation:
    config: Configuration
    latency: LatencyBreakdown
    energy_edge_j: float
    energy_cloud_j: float
    accuracy: float
    n_inferences: int = 1

    def __post_init__(self) -> None:
        for name in ("energy_edge_j", "energy_cloud_j", "accuracy"):
            object.__setattr__(self, name, float(getattr(self, name)))

    @property
    def energy_total_j(self) -> float:
        return self.energy_edge_j + self.energy_cloud_j

    @property
    def objectives(self) -> ObjectiveVector:
        return ObjectiveVector(self.latency.t_total_ms, self.energy_total_j, -self.accuracy)


def _check(c: Configuration, mp: ModelProfile) -> None:
    if c.model_id and c.model_id != mp.model_id:
        raise ValueError(f"configuration targets unknown model {c.model_id!r} (profile is {mp.model_id!r})")
    if not 0 <= c.split_layer <= mp.n_layers:
        raise ValueError(f"split layer {c.split_layer} outside 0..{mp.n_layers}")
    if not is_feasible(c, mp.space):
        raise ValueError(f"configuration {c.short()} is infeasible")


def uses_tpu(c: Configuration, mp: ModelProfile) -> bool:
    return c.tpu_mode != TpuMode.OFF and mp.tpu_permitted and c.split_layer > 0


def _edge_parts_s(c: Configuration, mp: ModelProfile, dp: DeviceProfile) -> tuple[float, float, float]:
    """Noiseless (prepare, head, decode) seconds for one inference."""
    k = c.split_layer
    scale = mp.reference_freq_ghz / c.cpu_freq_ghz
    layer_s = mp.edge_cpu_s[:k] * scale
    if uses_tpu(c, mp):
        layer_s = layer_s / (mp.edge_tpu_speedup[:k] * dp.tpu_mode_speedup[c.tpu_mode.label])
    decode = mp.edge_decode_s if k > 0 else 0.0
    return mp.edge_prepare_s, float(layer_s.sum()), decode


def _cloud_mode(c: Configuration) -> str:
    return "gpu" if c.use_gpu else "cpu"


def nominal_latency(
    c: Configuration, mp: ModelProfile, dp: DeviceProfile, n: int = DEFAULT_BATCH
) -> LatencyBreakdown:
    """Noise-free per-inference latency for a batch of ``n``."""
    _check(c, mp)
    if n < 1:
        raise ValueError("batch size must be >= 1")
    prep, head, decode = _edge_parts_s(c, mp, dp)
    t_edge = prep + head + decode
    k, L = c.split_layer, mp.n_layers
    if k == L:
        t_net = t_cloud = 0.0
    else:
        payload = mp.output_bytes[k]
        t_net = dp.rtt_s / n + payload / dp.bandwidth_bytes_s
        mode = _cloud_mode(c)
        tail = mp.cloud_gpu_s[k:] if c.use_gpu else mp.cloud_cpu_s[k:]
        t_cloud = (mp.cloud_fixed_s[mode] + mp.cloud_deserialize_s_per_mb[mode] * payload / 1e6
                   + float(tail.sum()))
    return LatencyBreakdown(t_edge * 1e3, t_net * 1e3, t_cloud * 1e3)


def latency_noise(rng: np.random.Generator, sigma: float | tuple[float, float, float]) -> np.ndarray:
    """Three truncated log-normal multipliers (edge, net, cloud)."""
    z = np.clip(rng.standard_normal(3), -NOISE_CLIP, NOISE_CLIP)
    return np.exp(np.asarray(sigma, dtype=float) * z)


def simulate_latency(
    c: Configuration,
    mp: ModelProfile,
    dp: DeviceProfile,
    rng: np.random.Generator | None,
    n: int = DEFAULT_BATCH,
) -> LatencyBreakdown:
    """Per-inference latency with multiplicative noise on each component.

    ``rng=None`` returns the noiseless mean.
    """
    base = nominal_latency(c, mp, dp, n)
    if rng is None:
        return base
    m = latency_noise(rng, dp.latency_sigmas)
    return LatencyBreakdown(base.t_edge_ms * m[0], base.t_net_ms * m[1], base.t_cloud_ms * m[2])


def phase_timeline(
    c: Configuration, mp: ModelProfile, dp: DeviceProfile, lb: LatencyBreakdown, n: int = DEFAULT_BATCH
) -> PhaseTimeline:
    """Lay out a batch of ``n`` inferences on a common clock with per-phase power levels."""
    prep, head, decode = _edge_parts_s(c, mp, dp)
    edge_nominal = prep + head + decode
    decode_share = decode / edge_nominal
    edge_total = n * lb.t_edge_ms / 1e3
    t_head = edge_total * (1.0 - decode_share)
    t_decode = edge_total * decode_share

    f = c.cpu_freq_ghz
    tpu_on = uses_tpu(c, mp)
    active = dp.edge_active_w(f) + (dp.tpu_power_w[c.tpu_mode.label] if tpu_on else 0.0)
    waiting = dp.edge_idle_w(f) + (dp.tpu_idle_w if tpu_on else 0.0)

    if c.split_layer == mp.n_layers:
        t_inf = t_head + t_decode
        edge = PiecewisePower([0.0, t_head, t_inf], [active, active])
        return PhaseTimeline(0.0, t_head, None, None, t_inf, edge, None)

    net_total = n * lb.t_net_ms / 1e3
    payload_s = n * mp.output_bytes[c.split_layer] / dp.bandwidth_bytes_s
    nominal_net = dp.rtt_s + payload_s
    up_share = (dp.rtt_s / 2 + payload_s) / nominal_net if nominal_net > 0 else 1.0
    t_net1 = t_head + net_total * up_share
    t_net2 = t_net1 + n * lb.t_cloud_ms / 1e3
    t_back = t_net2 + net_total * (1.0 - up_share)
    t_inf = t_back + t_decode
    edge = PiecewisePower(
        [0.0, t_head, t_net1, t_net2, t_back, t_inf],
        [active, waiting, waiting, waiting, active],
    )
    cloud = PiecewisePower([t_net1, t_net2], [dp.cloud_power_w[_cloud_mode(c)]])
    return PhaseTimeline(0.0, t_head, t_net1, t_net2, t_inf, edge, cloud)


def simulate_power_trace(
    c: Configuration, mp: ModelProfile, dp: DeviceProfile, lb: LatencyBreakdown, n: int = DEFAULT_BATCH
) -> PowerTrace:
    """Phase timeline plus the edge (200 ms) and cloud (20 ms) meter readings.

    The cloud meter only covers the active tail phase; for edge-only
    inference its series is identically zero.
    """
    tl = phase_timeline(c, mp, dp, lb, n)
    edge_series = tl.edge.sample(dp.edge_meter_interval_s)
    if tl.cloud is None:
        cloud_series = PowerSeries(np.array([0.0, tl.t_inf]), np.zeros(2))
    else:
        cloud_series = tl.cloud.sample(dp.cloud_meter_interval_s)
    return PowerTrace(tl, edge_series, cloud_series)


def quant_penalty(c: Configuration, mp: ModelProfile) -> float:
    acc = mp.accuracy
    k = c.split_layer
    if k == 0 or acc.max_penalty == 0:
        return 0.0
    mode = "tpu" if uses_tpu(c, mp) else "cpu"
    if mode not in acc.quantized_modes:
        return 0.0
    return acc.max_penalty * (k / mp.n_layers) ** acc.exponent


def simulate_accuracy(c: Configuration, mp: ModelProfile, rng: np.random.Generator | None) -> float:
    _check(c, mp)
    value = mp.accuracy.base - quant_penalty(c, mp)
    if rng is not None and mp.accuracy.noise_sigma > 0:
        z = float(np.clip(rng.standard_normal(), -NOISE_CLIP, NOISE_CLIP))
        value += mp.accuracy.noise_sigma * z
    return float(min(1.0, max(0.0, value)))


def _series_energy(series: PowerSeries) -> float:
    if len(series) < 2:
        return 0.0
    return integrate_energy(series)


def evaluate_trial(
    c: Configuration,
    mp: ModelProfile,
    dp: DeviceProfile,
    n: int,
    rng: np.random.Generator | None,
) -> Observation:
    """Run one trial of ``n`` batched inferences and return per-inference averages.

    Noise is drawn once per trial, in a fixed order (latency, then accuracy),
    so a given generator state always yields the same observation.
    """
    if n < 1:
        raise ValueError("a trial needs at least one inference")
    lb = simulate_latency(c, mp, dp, rng, n)
    trace = simulate_power_trace(c, mp, dp, lb, n)
    e_edge = _series_energy(trace.edge_series) / n
    e_cloud = 0.0 if trace.timeline.cloud is None else _series_energy(trace.cloud_series) / n
    accuracy = simulate_accuracy(c, mp, rng)
    return Observation(c, lb, e_edge, e_cloud, accuracy, n)


def nominal_observation(c: Configuration, mp: ModelProfile, dp: DeviceProfile, n: int = DEFAULT_BATCH) -> Observation:
    """Noise-free observation using exact phase integrals instead of meter samples."""
    lb = nominal_latency(c, mp, dp, n)
    tl = phase_timeline(c, mp, dp, lb, n)
    e_cloud = 0.0 if tl.cloud is None else tl.cloud.exact_energy() / n
    return Observation(c, lb, tl.edge.exact_energy() / n, e_cloud,
                       mp.accuracy.base - quant_penalty(c, mp), n)
