"""Dominance, non-dominated set extraction and front ordering.

All three objectives are minimized: (latency_ms, energy_j, -accuracy).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .config_space import Configuration, TpuMode
from .cost_model import ObjectiveVector

FRONT_SCHEMA = "splitsim-front/1"
FRONT_COLUMNS = ["model_id", "cpu_freq_ghz", "tpu_mode", "use_gpu", "split_layer",
                 "latency_ms", "energy_j", "accuracy"]

Point = tuple[Configuration, ObjectiveVector]


def dominates(a: ObjectiveVector | Sequence[float], b: ObjectiveVector | Sequence[float]) -> bool:
    """True iff ``a`` is no worse than ``b`` everywhere and strictly better somewhere."""
    av = a.as_tuple() if isinstance(a, ObjectiveVector) else tuple(a)
    bv = b.as_tuple() if isinstance(b, ObjectiveVector) else tuple(b)
    strictly = False
    for x, y in zip(av, bv):
        if x > y:
            return False
        if x < y:
            strictly = True
    return strictly


def front_key(point: Point) -> tuple:
    cfg, obj = point
    return (obj.energy_j, obj.neg_accuracy, obj.latency_ms, cfg)


@dataclass(frozen=True)
class ParetoFront:
    """Non-dominated (configuration, objectives) pairs in scheduler order.

    ``shadowed`` keeps configurations whose objective vector duplicated a
    member's; they are excluded from scheduling.
    """

    points: tuple[Point, ...]
    shadowed: tuple[Point, ...] = field(default=())

    def __len__(self) -> int:
        return len(self.points)

    def __iter__(self):
        return iter(self.points)

    def __getitem__(self, i: int) -> Point:
        return self.points[i]

    @property
    def configs(self) -> list[Configuration]:
        return [c for c, _ in self.points]

    @property
    def objectives(self) -> list[ObjectiveVector]:
        return [o for _, o in self.points]


def sort_front(front: ParetoFront | Iterable[Point]) -> ParetoFront:
    """Order by energy ascending, accuracy descending, latency ascending, then configuration."""
    if isinstance(front, ParetoFront):
        return ParetoFront(tuple(sorted(front.points, key=front_key)), front.shadowed)
    return ParetoFront(tuple(sorted(front, key=front_key)))


def extract_front(points: Iterable[Point]) -> ParetoFront:
    """The non-dominated subset, with duplicate objective vectors collapsed.

    Plain pairwise filter (vectorized); among identical vectors the lexicographically
    smallest configuration is kept.
    """
    pts = sorted(points, key=lambda p: (p[1].as_tuple(), p[0]))
    unique: list[Point] = []
    shadowed: list[Point] = []
    for p in pts:
        if unique and unique[-1][1].as_tuple() == p[1].as_tuple():
            shadowed.append(p)
        else:
            unique.append(p)
    F = np.array([p[1].as_tuple() for p in unique], dtype=float).reshape(-1, 3)
    # dominated[i]: some row is <= row i everywhere and < somewhere.
    le = np.all(F[:, None, :] <= F[None, :, :], axis=2)
    lt = np.any(F[:, None, :] < F[None, :, :], axis=2)
    dominated = np.any(le & lt, axis=0)
    kept = [p for p, d in zip(unique, dominated) if not d]
    kept_vectors = {p[1].as_tuple() for p in kept}
    shadowed = [p for p in shadowed if p[1].as_tuple() in kept_vectors]
    return ParetoFront(tuple(sorted(kept, key=front_key)), tuple(shadowed))


def write_front_csv(front: ParetoFront, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# {FRONT_SCHEMA}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FRONT_COLUMNS)
        for cfg, obj in front.points:
            w.writerow([cfg.model_id, f"{cfg.cpu_freq_ghz:g}", cfg.tpu_mode.label, int(cfg.use_gpu),
                        cfg.split_layer, repr(obj.latency_ms), repr(obj.energy_j), repr(obj.accuracy)])


def read_front_csv(path: str | Path) -> ParetoFront:
    with open(path, newline="") as fh:
        first = fh.readline().strip()
        if first != f"# {FRONT_SCHEMA}":
            raise ValueError(f"{path}: expected header '# {FRONT_SCHEMA}', got {first!r}")
        rows = list(csv.DictReader(fh))
    points = []
    for row in rows:
        cfg = Configuration(float(row["cpu_freq_ghz"]), TpuMode.parse(row["tpu_mode"]),
                            bool(int(row["use_gpu"])), int(row["split_layer"]), row["model_id"])
        obj = ObjectiveVector(float(row["latency_ms"]), float(row["energy_j"]), -float(row["accuracy"]))
        points.append((cfg, obj))
    return sort_front(points)
