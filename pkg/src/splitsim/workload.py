"""Request streams with Weibull-distributed latency deadlines."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .controller import Request
from .cost_model import DEFAULT_BATCH
from .rng import substream

WORKLOAD_SCHEMA = "splitsim-workload/1"
WORKLOAD_COLUMNS = ["request_id", "qos_ms", "n_inferences"]

# Redraws allowed when every sample comes out identical.
_MAX_REDRAWS = 100


@dataclass(frozen=True)
class WorkloadSpec:
    n_requests: int
    min_ms: float
    max_ms: float
    shape: float = 1.0
    seed: int = 0
    n_inferences: int = DEFAULT_BATCH
    model_id: str = ""

    def __post_init__(self) -> None:
        if self.n_requests < 2:
            raise ValueError("a workload needs at least two requests to pin both bounds")
        if not 0 < self.min_ms < self.max_ms:
            raise ValueError("need 0 < min_ms < max_ms")
        if self.shape <= 0:
            raise ValueError("Weibull shape must be positive")
        if self.n_inferences < 1:
            raise ValueError("requests need at least one inference")


def raw_samples(spec: WorkloadSpec, attempt: int = 0) -> np.ndarray:
    return substream(spec.seed, "workload", attempt).weibull(spec.shape, spec.n_requests)


def rescale(samples: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """Affine map sending min(samples) to ``lo`` and max(samples) to ``hi`` exactly."""
    s_min, s_max = samples.min(), samples.max()
    if s_max <= s_min:
        raise ValueError("cannot rescale identical samples")
    out = lo + (samples - s_min) * ((hi - lo) / (s_max - s_min))
    # Pin the endpoints against rounding.
    out[samples == s_min] = lo
    out[samples == s_max] = hi
    return np.clip(out, lo, hi)


def generate_workload(spec: WorkloadSpec) -> list[Request]:
    for attempt in range(_MAX_REDRAWS):
        s = raw_samples(spec, attempt)
        if s.max() > s.min():
            break
    else:
        raise RuntimeError("Weibull draws stayed degenerate")
    qos = rescale(s, spec.min_ms, spec.max_ms)
    return [Request(i, float(q), spec.n_inferences, spec.model_id) for i, q in enumerate(qos)]


def write_workload_csv(requests: Sequence[Request], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# {WORKLOAD_SCHEMA}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(WORKLOAD_COLUMNS)
        for r in requests:
            w.writerow([r.request_id, repr(r.qos_ms), r.n_inferences])


def read_workload_csv(path: str | Path, model_id: str = "") -> list[Request]:
    with open(path, newline="") as fh:
        first = fh.readline().strip()
        if first != f"# {WORKLOAD_SCHEMA}":
            raise ValueError(f"{path}: expected header '# {WORKLOAD_SCHEMA}', got {first!r}")
        rows = list(csv.DictReader(fh))
    requests = [Request(int(r["request_id"]), float(r["qos_ms"]), int(r["n_inferences"]), model_id) for r in rows]
    ids = [r.request_id for r in requests]
    if len(set(ids)) != len(ids):
        raise ValueError(f"{path}: duplicate request ids")
    return requests
