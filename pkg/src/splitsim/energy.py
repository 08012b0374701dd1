"""Sampled power traces and their integration into energy."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class PowerSeries:
    """Power samples (W) at strictly increasing timestamps (s)."""

    times_s: np.ndarray
    watts: np.ndarray

    def __post_init__(self) -> None:
        t = np.asarray(self.times_s, dtype=float)
        p = np.asarray(self.watts, dtype=float)
        if t.ndim != 1 or t.shape != p.shape:
            raise ValueError("times and watts must be 1-D arrays of equal length")
        object.__setattr__(self, "times_s", t)
        object.__setattr__(self, "watts", p)

    def __len__(self) -> int:
        return len(self.times_s)

    @classmethod
    def from_pairs(cls, pairs: Sequence[tuple[float, float]]) -> "PowerSeries":
        arr = np.asarray(pairs, dtype=float).reshape(-1, 2)
        return cls(arr[:, 0], arr[:, 1])


def integrate_energy(series: PowerSeries | Sequence[tuple[float, float]]) -> float:
    """Trapezoidal energy (J) of a sampled power trace."""
    if not isinstance(series, PowerSeries):
        series = PowerSeries.from_pairs(series)
    t, p = series.times_s, series.watts
    if len(t) < 2:
        raise ValueError("energy integration needs at least two samples")
    dt = np.diff(t)
    if np.any(dt <= 0):
        raise ValueError("sample timestamps must be strictly increasing")
    return float(np.sum(0.5 * (p[1:] + p[:-1]) * dt))


@dataclass(frozen=True)
class PiecewisePower:
    """A right-continuous piecewise-constant power signal.

    ``edges`` has one more entry than ``levels``; level i holds on
    [edges[i], edges[i+1]). At the final edge the last level is reported.
    """

    edges: np.ndarray
    levels: np.ndarray

    def __post_init__(self) -> None:
        e = np.asarray(self.edges, dtype=float)
        lv = np.asarray(self.levels, dtype=float)
        if e.ndim != 1 or len(e) != len(lv) + 1 or len(lv) == 0:
            raise ValueError("need len(edges) == len(levels) + 1 >= 2")
        if np.any(np.diff(e) < 0):
            raise ValueError("phase edges must be non-decreasing")
        object.__setattr__(self, "edges", e)
        object.__setattr__(self, "levels", lv)

    @property
    def start(self) -> float:
        return float(self.edges[0])

    @property
    def end(self) -> float:
        return float(self.edges[-1])

    def at(self, t: np.ndarray) -> np.ndarray:
        idx = np.searchsorted(self.edges, t, side="right") - 1
        idx = np.clip(idx, 0, len(self.levels) - 1)
        return self.levels[idx]

    def exact_energy(self) -> float:
        return float(np.sum(self.levels * np.diff(self.edges)))

    def sample(self, interval_s: float) -> PowerSeries:
        """Emulate a meter reading every ``interval_s`` from start to end.

        The meter window closes with one final reading at the end time.
        """
        if interval_s <= 0:
            raise ValueError("sampling interval must be positive")
        start, end = self.start, self.end
        if end <= start:
            return PowerSeries(np.array([start]), self.levels[:1].copy())
        n = int(np.floor((end - start) / interval_s))
        t = start + interval_s * np.arange(n + 1)
        if end - t[-1] > 1e-12 * max(1.0, end):
            t = np.append(t, end)
        else:
            t[-1] = end
        return PowerSeries(t, self.at(t))
