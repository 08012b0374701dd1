"""Online phase: configuration selection, simulated reconfiguration and request execution."""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .config_space import Configuration, DecisionClass, TpuMode, is_feasible
from .cost_model import DEFAULT_BATCH, NOISE_CLIP, Observation, ObjectiveVector, evaluate_trial
from .pareto import ParetoFront, Point
from .profiles import DeviceProfile, ModelProfile

DECISIONS_SCHEMA = "splitsim-decisions/1"
DECISION_COLUMNS = [
    "policy", "request_id", "qos_ms", "cpu_freq_ghz", "tpu_mode", "use_gpu", "split_layer",
    "decision", "predicted_latency_ms", "predicted_energy_j", "latency_ms", "t_edge_ms", "t_net_ms",
    "t_cloud_ms", "energy_edge_j", "energy_cloud_j", "energy_j", "accuracy", "violation",
    "exceedance_ms", "selection_ms", "apply_ms",
]


class InfeasibleRequest(ValueError):
    """A policy asked for a configuration the model cannot run."""


@dataclass(frozen=True)
class Request:
    request_id: int
    qos_ms: float
    n_inferences: int = DEFAULT_BATCH
    model_id: str = ""

    def __post_init__(self) -> None:
        if not self.qos_ms > 0:
            raise ValueError(f"request {self.request_id}: qos must be positive")
        if self.n_inferences < 1:
            raise ValueError(f"request {self.request_id}: needs at least one inference")


@dataclass(frozen=True)
class ScheduleDecision:
    request_id: int
    config: Configuration
    decision: DecisionClass
    predicted: ObjectiveVector | None
    selection_ms: float
    apply_ms: float


def _front_points(front: ParetoFront | Sequence[Point]) -> Sequence[Point]:
    return front.points if isinstance(front, ParetoFront) else front


def select_index(qos_ms: float, sorted_front: ParetoFront | Sequence[Point]) -> int:
    points = _front_points(sorted_front)
    if not points:
        raise ValueError("cannot select from an empty front")
    best = 0
    best_latency = math.inf
    for i, (_, obj) in enumerate(points):
        if obj.latency_ms <= qos_ms:
            return i
        # Strict comparison: ties keep the earlier, cheaper entry.
        if obj.latency_ms < best_latency:
            best, best_latency = i, obj.latency_ms
    return best


def select_configuration(qos_ms: float, sorted_front: ParetoFront | Sequence[Point]) -> Configuration:
    """First entry meeting the deadline, otherwise the fastest entry.

    ``sorted_front`` must be in scheduler order (energy ascending), so the
    first satisfying entry is the cheapest one.
    """
    return _front_points(sorted_front)[select_index(qos_ms, sorted_front)][0]


def _overhead(rng: np.random.Generator, median_ms: float, sigma: float) -> float:
    z = float(np.clip(rng.standard_normal(), -NOISE_CLIP, NOISE_CLIP))
    return median_ms * math.exp(sigma * z)


def changed_settings(prev: Configuration | None, nxt: Configuration, mp: ModelProfile | None = None) -> list[str]:
    """Settings that must be touched to move from ``prev`` to ``nxt``."""
    if prev is None:
        parts = ["frequency", "tpu", "head"]
        if mp is None or nxt.split_layer < mp.n_layers:
            parts.append("cloud")
        return parts
    if prev == nxt:
        return []
    parts = []
    if prev.cpu_freq_ghz != nxt.cpu_freq_ghz:
        parts.append("frequency")
    if prev.tpu_mode != nxt.tpu_mode:
        parts.append("tpu")
    if prev.split_layer != nxt.split_layer or (prev.tpu_mode == TpuMode.OFF) != (nxt.tpu_mode == TpuMode.OFF):
        parts.append("head")
    is_edge_only = mp is not None and nxt.split_layer == mp.n_layers
    if not is_edge_only and (prev.split_layer != nxt.split_layer or prev.use_gpu != nxt.use_gpu):
        parts.append("cloud")
    return parts


def apply_configuration(
    prev: Configuration | None,
    nxt: Configuration,
    dp: DeviceProfile,
    rng: np.random.Generator,
    mp: ModelProfile | None = None,
) -> float:
    """Simulated reconfiguration time (ms), charged per changed setting."""
    return sum(_overhead(rng, dp.apply_ms[part], dp.apply_sigma) for part in changed_settings(prev, nxt, mp))


def selection_time(front_size: int, dp: DeviceProfile, rng: np.random.Generator) -> float:
    """Simulated scheduler decision time (ms); grows linearly with the front."""
    return _overhead(rng, dp.selection_base_ms + dp.selection_per_entry_ms * front_size, dp.selection_sigma)


@dataclass
class ControllerState:
    current: Configuration | None = None


def execute_request(
    r: Request,
    front: ParetoFront,
    mp: ModelProfile,
    dp: DeviceProfile,
    state: ControllerState,
    rng: np.random.Generator,
    config: Configuration | None = None,
) -> tuple[ScheduleDecision, Observation]:
    """Select (unless ``config`` pins a baseline), apply, run and record one request.

    Overheads are drawn from ``rng`` before the trial noise so that the
    draw order is fixed.
    """
    if r.model_id and r.model_id != mp.model_id:
        raise ValueError(f"request {r.request_id} targets {r.model_id!r}, profile is {mp.model_id!r}")
    predicted = None
    if config is None:
        idx = select_index(r.qos_ms, front)
        config, predicted = front[idx]
    t_sel = selection_time(len(front), dp, rng)
    t_apply = apply_configuration(state.current, config, dp, rng, mp)
    obs = evaluate_trial(config, mp, dp, r.n_inferences, rng)
    state.current = config
    decision = ScheduleDecision(r.request_id, config, config.decision_class(mp.n_layers),
                                predicted, t_sel, t_apply)
    return decision, obs


class Policy(str, enum.Enum):
    ADAPTIVE = "adaptive"
    CLOUD = "cloud"
    EDGE = "edge"
    LATENCY = "latency"
    ENERGY = "energy"

    @classmethod
    def parse(cls, value: "str | Policy") -> "Policy":
        try:
            return cls(value)
        except ValueError:
            names = ", ".join(p.value for p in cls)
            raise ValueError(f"unknown policy {value!r} (expected one of {names})") from None


def baseline_policy(kind: Policy | str, front: ParetoFront | None, mp: ModelProfile) -> Configuration:
    """The fixed configuration a baseline runs every request on."""
    kind = Policy.parse(kind)
    s = mp.space
    f_max = max(s.cpu_grid)
    if kind is Policy.CLOUD:
        c = Configuration(f_max, TpuMode.OFF, True, 0, mp.model_id)
    elif kind is Policy.EDGE:
        tpu = TpuMode.MAX if mp.tpu_permitted and TpuMode.MAX in s.tpu_modes else TpuMode.OFF
        c = Configuration(f_max, tpu, False, mp.n_layers, mp.model_id)
    elif kind in (Policy.LATENCY, Policy.ENERGY):
        if front is None or len(front) == 0:
            raise ValueError(f"the {kind.value} baseline needs a non-empty front")
        if kind is Policy.ENERGY:
            return front[0][0]
        return front[select_index(0.0, front)][0]
    else:
        raise ValueError("the adaptive policy has no fixed configuration")
    if not is_feasible(c, s):
        raise InfeasibleRequest(f"{mp.model_id} admits no {kind.value}-only configuration {c.short()}")
    return c


@dataclass(frozen=True)
class RequestRecord:
    policy: str
    request: Request
    decision: ScheduleDecision
    observation: Observation

    @property
    def latency_ms(self) -> float:
        return self.observation.latency.t_total_ms

    @property
    def violation(self) -> bool:
        return self.latency_ms > self.request.qos_ms

    @property
    def exceedance_ms(self) -> float:
        return self.latency_ms - self.request.qos_ms if self.violation else 0.0


def run_policy(
    policy: Policy | str,
    requests: Sequence[Request],
    front: ParetoFront,
    mp: ModelProfile,
    dp: DeviceProfile,
    rng: np.random.Generator,
) -> list[RequestRecord]:
    """Serve ``requests`` strictly in order under one policy."""
    policy = Policy.parse(policy)
    pinned = None if policy is Policy.ADAPTIVE else baseline_policy(policy, front, mp)
    state = ControllerState()
    out = []
    for r in requests:
        decision, obs = execute_request(r, front, mp, dp, state, rng, config=pinned)
        out.append(RequestRecord(policy.value, r, decision, obs))
    return out


def write_decisions_csv(records: Sequence[RequestRecord], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# {DECISIONS_SCHEMA}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(DECISION_COLUMNS)
        for rec in records:
            d, o, c = rec.decision, rec.observation, rec.decision.config
            pred = d.predicted
            w.writerow([
                rec.policy, rec.request.request_id, repr(rec.request.qos_ms), f"{c.cpu_freq_ghz:g}",
                c.tpu_mode.label, int(c.use_gpu), c.split_layer, d.decision.value,
                "" if pred is None else repr(pred.latency_ms), "" if pred is None else repr(pred.energy_j),
                repr(rec.latency_ms), repr(o.latency.t_edge_ms), repr(o.latency.t_net_ms),
                repr(o.latency.t_cloud_ms), repr(o.energy_edge_j), repr(o.energy_cloud_j),
                repr(o.energy_total_j), repr(o.accuracy), int(rec.violation), repr(rec.exceedance_ms),
                repr(d.selection_ms), repr(d.apply_ms),
            ])
