"""Experiment summaries, trace replay and front hypervolume."""

from __future__ import annotations

import csv
import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .config_space import Configuration, DecisionClass, TpuMode, enumerate_space
from .controller import (
    ControllerState,
    Policy,
    Request,
    RequestRecord,
    ScheduleDecision,
    apply_configuration,
    baseline_policy,
    select_index,
    selection_time,
)
from .cost_model import DEFAULT_BATCH, LatencyBreakdown, Observation, ObjectiveVector, evaluate_trial
from .pareto import ParetoFront
from .profiles import DeviceProfile, ModelProfile
from .rng import substream

POOL_REPEATS = 5
POOL_SCHEMA = "splitsim-pool/1"
POOL_COLUMNS = ["cpu_freq_ghz", "tpu_mode", "use_gpu", "split_layer", "repeat", "t_edge_ms",
                "t_net_ms", "t_cloud_ms", "energy_edge_j", "energy_cloud_j", "accuracy", "n_inferences"]
LONG_COLUMNS = ["policy", "metric", "value"]

# Per-request quantities reported for every policy.
METRICS = ("latency_ms", "t_edge_ms", "t_net_ms", "t_cloud_ms", "energy_j", "energy_edge_j",
           "energy_cloud_j", "accuracy", "selection_ms", "apply_ms")


def describe(values: Sequence[float]) -> dict[str, float]:
    """min, quartiles (linear interpolation), max and mean; empty input gives an empty dict."""
    a = np.asarray(values, dtype=float)
    if a.size == 0:
        return {}
    q1, med, q3 = np.percentile(a, [25, 50, 75], method="linear")
    return {"n": int(a.size), "min": float(a.min()), "q1": float(q1), "median": float(med),
            "q3": float(q3), "max": float(a.max()), "mean": float(a.mean())}


def _metric_values(rec: RequestRecord) -> dict[str, float]:
    o, d = rec.observation, rec.decision
    return {
        "latency_ms": o.latency.t_total_ms, "t_edge_ms": o.latency.t_edge_ms,
        "t_net_ms": o.latency.t_net_ms, "t_cloud_ms": o.latency.t_cloud_ms,
        "energy_j": o.energy_total_j, "energy_edge_j": o.energy_edge_j,
        "energy_cloud_j": o.energy_cloud_j, "accuracy": o.accuracy,
        "selection_ms": d.selection_ms, "apply_ms": d.apply_ms,
    }


@dataclass
class PolicySummary:
    policy: str
    n_requests: int
    stats: dict[str, dict[str, float]]
    violations: int
    exceedance: dict[str, float]
    decisions: dict[str, int]

    @property
    def violation_rate(self) -> float:
        return self.violations / self.n_requests

    @property
    def satisfaction_rate(self) -> float:
        return 1.0 - self.violation_rate

    def median(self, metric: str) -> float:
        return self.stats[metric]["median"]

    def to_dict(self) -> dict:
        return {"policy": self.policy, "n_requests": self.n_requests, "violations": self.violations,
                "violation_rate": self.violation_rate, "exceedance_ms": self.exceedance,
                "decisions": self.decisions, "stats": self.stats}


@dataclass
class ExperimentReport:
    model_id: str
    policies: dict[str, PolicySummary]
    records: dict[str, list[RequestRecord]] = field(default_factory=dict, repr=False)
    # Mean over requests of 1 - E_policy / E_cloud, paired by request id.
    energy_saving_vs_cloud: dict[str, float] = field(default_factory=dict)

    def __getitem__(self, policy: str) -> PolicySummary:
        return self.policies[Policy.parse(policy).value]

    def to_dict(self) -> dict:
        return {"model_id": self.model_id,
                "energy_saving_vs_cloud": self.energy_saving_vs_cloud,
                "policies": {k: v.to_dict() for k, v in self.policies.items()}}


def summarize_policy(policy: str, records: Sequence[RequestRecord], workload: Sequence[Request]) -> PolicySummary:
    if not records:
        raise ValueError(f"policy {policy}: no records")
    by_id = {r.request_id: r for r in workload}
    if len(by_id) != len(workload):
        raise ValueError("workload has duplicate request ids")
    seen = set()
    for rec in records:
        rid = rec.request.request_id
        if rid not in by_id or rid in seen or rec.decision.request_id != rid:
            raise ValueError(f"policy {policy}: record for request {rid} does not match the workload")
        seen.add(rid)
    if seen != set(by_id):
        raise ValueError(f"policy {policy}: {len(by_id) - len(seen)} requests have no observation")

    columns = {m: [] for m in METRICS}
    exceed = []
    for rec in records:
        for m, v in _metric_values(rec).items():
            columns[m].append(v)
        qos = by_id[rec.request.request_id].qos_ms
        if rec.latency_ms > qos:
            exceed.append(rec.latency_ms - qos)
    tally = Counter(rec.decision.decision.value for rec in records)
    decisions = {dc.value: tally.get(dc.value, 0) for dc in DecisionClass}
    return PolicySummary(policy, len(records), {m: describe(v) for m, v in columns.items()},
                         len(exceed), describe(exceed), decisions)


def energy_saving(records: Sequence[RequestRecord], cloud: Sequence[RequestRecord]) -> float:
    base = {r.request.request_id: r.observation.energy_total_j for r in cloud}
    savings = [1.0 - r.observation.energy_total_j / base[r.request.request_id] for r in records]
    return float(np.mean(savings))


def summarize(records: Mapping[str, Sequence[RequestRecord]], workload: Sequence[Request],
              model_id: str = "") -> ExperimentReport:
    policies = {p: summarize_policy(p, recs, workload) for p, recs in records.items()}
    savings = {}
    cloud = records.get(Policy.CLOUD.value)
    if cloud:
        savings = {p: energy_saving(recs, cloud) for p, recs in records.items() if p != Policy.CLOUD.value}
    return ExperimentReport(model_id, policies, {p: list(r) for p, r in records.items()}, savings)


# ---------------------------------------------------------------------------
# Trace replay


class ObservationPool:
    """Stored observations per configuration, sampled uniformly during replay."""

    def __init__(self, entries: Mapping[Configuration, Sequence[Observation]] | None = None):
        self._entries: dict[Configuration, list[Observation]] = {}
        for c, obs in (entries or {}).items():
            self._entries[c] = list(obs)

    def __contains__(self, c: Configuration) -> bool:
        return c in self._entries

    def __getitem__(self, c: Configuration) -> list[Observation]:
        try:
            return self._entries[c]
        except KeyError:
            raise KeyError(f"configuration {c.short()} is missing from the observation pool") from None

    def __len__(self) -> int:
        return len(self._entries)

    def configs(self) -> list[Configuration]:
        return sorted(self._entries)

    def add(self, obs: Observation) -> None:
        self._entries.setdefault(obs.config, []).append(obs)

    @classmethod
    def build(cls, configs: Iterable[Configuration], mp: ModelProfile, dp: DeviceProfile, seed: int,
              repeats: int = POOL_REPEATS, n: int = DEFAULT_BATCH) -> "ObservationPool":
        """Evaluate each configuration ``repeats`` times on its own noise sub-stream."""
        index = {c: i for i, c in enumerate(enumerate_space(mp.space))}
        pool = cls()
        for c in sorted(set(configs)):
            for rep in range(repeats):
                pool.add(evaluate_trial(c, mp, dp, n, substream(seed, "pool", index[c], rep)))
        return pool

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(f"# {POOL_SCHEMA}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(POOL_COLUMNS)
            for c in self.configs():
                for rep, o in enumerate(self._entries[c]):
                    w.writerow([f"{c.cpu_freq_ghz:g}", c.tpu_mode.label, int(c.use_gpu), c.split_layer, rep,
                                repr(o.latency.t_edge_ms), repr(o.latency.t_net_ms), repr(o.latency.t_cloud_ms),
                                repr(o.energy_edge_j), repr(o.energy_cloud_j), repr(o.accuracy), o.n_inferences])

    @classmethod
    def read_csv(cls, path: str | Path, model_id: str = "") -> "ObservationPool":
        with open(path, newline="") as fh:
            first = fh.readline().strip()
            if first != f"# {POOL_SCHEMA}":
                raise ValueError(f"{path}: expected header '# {POOL_SCHEMA}', got {first!r}")
            rows = list(csv.DictReader(fh))
        pool = cls()
        for row in rows:
            c = Configuration(float(row["cpu_freq_ghz"]), TpuMode.parse(row["tpu_mode"]),
                              bool(int(row["use_gpu"])), int(row["split_layer"]), model_id)
            lb = LatencyBreakdown(float(row["t_edge_ms"]), float(row["t_net_ms"]), float(row["t_cloud_ms"]))
            pool.add(Observation(c, lb, float(row["energy_edge_j"]), float(row["energy_cloud_j"]),
                                 float(row["accuracy"]), int(row["n_inferences"])))
        return pool


def replay_policy(policy: Policy | str, pool: ObservationPool, front: ParetoFront, workload: Sequence[Request],
                  mp: ModelProfile, dp: DeviceProfile, seed: int) -> list[RequestRecord]:
    """Serve ``workload`` by sampling stored observations instead of re-simulating."""
    policy = Policy.parse(policy)
    pinned = None if policy is Policy.ADAPTIVE else baseline_policy(policy, front, mp)
    pick_rng = substream(seed, "replay", list(Policy).index(policy))
    cost_rng = substream(seed, "overhead", list(Policy).index(policy))
    state = ControllerState()
    out = []
    for r in workload:
        predicted: ObjectiveVector | None = None
        if pinned is None:
            config, predicted = front[select_index(r.qos_ms, front)]
        else:
            config = pinned
        stored = pool[config]
        obs = stored[int(pick_rng.integers(len(stored)))]
        t_sel = selection_time(len(front), dp, cost_rng)
        t_apply = apply_configuration(state.current, config, dp, cost_rng, mp)
        state.current = config
        d = ScheduleDecision(r.request_id, config, config.decision_class(mp.n_layers), predicted, t_sel, t_apply)
        out.append(RequestRecord(policy.value, r, d, obs))
    return out


def replay_simulation(pool: ObservationPool, front: ParetoFront, workload: Sequence[Request], seed: int,
                      mp: ModelProfile, dp: DeviceProfile,
                      policies: Sequence[Policy | str] = (Policy.ADAPTIVE,)) -> ExperimentReport:
    records = {Policy.parse(p).value: replay_policy(p, pool, front, workload, mp, dp, seed) for p in policies}
    return summarize(records, workload, mp.model_id)


def needed_configs(front: ParetoFront, mp: ModelProfile, policies: Sequence[Policy | str]) -> list[Configuration]:
    """Every configuration a replay over ``policies`` can touch."""
    configs = set()
    for p in policies:
        p = Policy.parse(p)
        if p is Policy.ADAPTIVE:
            configs.update(front.configs)
        else:
            configs.add(baseline_policy(p, front, mp))
    return sorted(configs)


# ---------------------------------------------------------------------------
# Hypervolume


def _hv2d(points: np.ndarray, ref: np.ndarray) -> float:
    """Area dominated by 2-D points (minimization) inside the reference box."""
    if len(points) == 0:
        return 0.0
    pts = points[np.lexsort((points[:, 1], points[:, 0]))]
    area = 0.0
    best_y = ref[1]
    for x, y in pts:
        if y < best_y:
            area += (ref[0] - x) * (best_y - y)
            best_y = y
    return area


def hypervolume(front: ParetoFront | Sequence[ObjectiveVector] | np.ndarray,
                reference_point: Sequence[float]) -> float:
    """Exact 3-D hypervolume by sweeping slabs along the third objective."""
    if isinstance(front, ParetoFront):
        P = np.array([o.as_tuple() for o in front.objectives], dtype=float).reshape(-1, 3)
    elif len(front) and isinstance(front[0], ObjectiveVector):
        P = np.array([o.as_tuple() for o in front], dtype=float)
    else:
        P = np.asarray(front, dtype=float).reshape(-1, 3)
    ref = np.asarray(reference_point, dtype=float)
    if len(P) == 0:
        return 0.0
    if np.any(P >= ref):
        raise ValueError("every point must lie strictly inside the reference box")
    P = P[np.argsort(P[:, 2], kind="stable")]
    zs = np.append(P[:, 2], ref[2])
    volume = 0.0
    for i in range(len(P)):
        depth = zs[i + 1] - zs[i]
        if depth > 0:
            volume += depth * _hv2d(P[: i + 1, :2], ref[:2])
    return float(volume)


def default_reference(*fronts: ParetoFront) -> tuple[float, float, float]:
    """(1.05 x max latency, 1.05 x max energy, 0) over the union of ``fronts``."""
    objs = [o for f in fronts for o in f.objectives]
    if not objs:
        raise ValueError("need at least one front point")
    return (1.05 * max(o.latency_ms for o in objs), 1.05 * max(o.energy_j for o in objs), 0.0)


# ---------------------------------------------------------------------------
# Serialization


def write_report_json(report: ExperimentReport, path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_report_json(path: str | Path) -> dict:
    with open(path) as fh:
        doc = json.load(fh)
    if "policies" not in doc:
        raise ValueError(f"{path}: not a report")
    return doc


def write_summary_csv(report: ExperimentReport, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["policy", "metric", "n", "min", "q1", "median", "q3", "max", "mean"])
        for name, s in report.policies.items():
            for metric, st in list(s.stats.items()) + [("exceedance_ms", s.exceedance)]:
                if st:
                    w.writerow([name, metric] + [repr(st[k]) for k in ("n", "min", "q1", "median", "q3", "max", "mean")])


def long_rows(report: ExperimentReport) -> list[tuple[str, str, float]]:
    rows = []
    for policy, records in report.records.items():
        for rec in records:
            for m, v in _metric_values(rec).items():
                rows.append((policy, m, v))
            if rec.violation:
                rows.append((policy, "exceedance_ms", rec.exceedance_ms))
    return rows


def write_long_csv(rows: Iterable[tuple[str, str, float]], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LONG_COLUMNS)
        for policy, metric, value in rows:
            w.writerow([policy, metric, repr(float(value))])
