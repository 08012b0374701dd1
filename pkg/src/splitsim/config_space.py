"""Configuration points and the discrete, conditionally constrained search space."""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence

DEFAULT_CPU_GRID = (0.6, 0.8, 1.0, 1.2, 1.4, 1.6, 1.8)


class TpuMode(enum.IntEnum):
    OFF = 0
    STD = 1
    MAX = 2

    @property
    def label(self) -> str:
        return self.name.lower()

    @classmethod
    def parse(cls, value: "str | int | TpuMode") -> "TpuMode":
        if isinstance(value, TpuMode):
            return value
        if isinstance(value, int):
            return cls(value)
        try:
            return cls[str(value).strip().upper()]
        except KeyError:
            raise ValueError(f"unknown TPU mode {value!r}") from None


class DecisionClass(enum.Enum):
    EDGE_ONLY = "edge"
    CLOUD_ONLY = "cloud"
    SPLIT = "split"


@dataclass(frozen=True, order=True)
class Configuration:
    """One point of the search space.

    Ordering is lexicographic over (cpu_freq_ghz, tpu_mode, use_gpu,
    split_layer, model_id), which is also the enumeration order.
    """

    cpu_freq_ghz: float
    tpu_mode: TpuMode
    use_gpu: bool
    split_layer: int
    model_id: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "tpu_mode", TpuMode.parse(self.tpu_mode))
        object.__setattr__(self, "use_gpu", bool(self.use_gpu))
        object.__setattr__(self, "split_layer", int(self.split_layer))
        object.__setattr__(self, "cpu_freq_ghz", round(float(self.cpu_freq_ghz), 6))

    def decision_class(self, n_layers: int) -> DecisionClass:
        if self.split_layer == n_layers:
            return DecisionClass.EDGE_ONLY
        if self.split_layer == 0:
            return DecisionClass.CLOUD_ONLY
        return DecisionClass.SPLIT

    def replace(self, **changes) -> "Configuration":
        values = {
            "cpu_freq_ghz": self.cpu_freq_ghz,
            "tpu_mode": self.tpu_mode,
            "use_gpu": self.use_gpu,
            "split_layer": self.split_layer,
            "model_id": self.model_id,
        }
        values.update(changes)
        return Configuration(**values)

    def short(self) -> str:
        gpu = "gpu" if self.use_gpu else "nogpu"
        return f"{self.cpu_freq_ghz:g}GHz/{self.tpu_mode.label}/{gpu}/k={self.split_layer}"


# Named per-model constraints. Each predicate returns True when the
# configuration is acceptable.
ConstraintFn = Callable[[Configuration, "SearchSpace"], bool]

CONSTRAINTS: dict[str, ConstraintFn] = {
    "no-tpu": lambda c, s: c.tpu_mode == TpuMode.OFF,
    "no-gpu": lambda c, s: not c.use_gpu,
    "no-edge-only": lambda c, s: c.split_layer != s.n_layers,
    "no-cloud-only": lambda c, s: c.split_layer != 0,
}

# Minimal repairs for the named constraints, applied after the structural
# repairs in SearchSpace.repair. Constraints without a repair cannot be
# repaired and the caller falls back to resampling.
REPAIRS: dict[str, Callable[[Configuration, "SearchSpace"], Configuration]] = {
    "no-tpu": lambda c, s: c.replace(tpu_mode=TpuMode.OFF),
    "no-gpu": lambda c, s: c.replace(use_gpu=False),
}


@dataclass(frozen=True)
class SearchSpace:
    model_id: str
    n_layers: int
    cpu_grid: tuple[float, ...] = DEFAULT_CPU_GRID
    tpu_modes: tuple[TpuMode, ...] = (TpuMode.OFF, TpuMode.STD, TpuMode.MAX)
    gpu_options: tuple[bool, ...] = (False, True)
    extra_constraints: tuple[str, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        if self.n_layers < 1:
            raise ValueError("a model needs at least one layer")
        object.__setattr__(self, "cpu_grid", tuple(round(float(f), 6) for f in self.cpu_grid))
        object.__setattr__(self, "tpu_modes", tuple(TpuMode.parse(m) for m in self.tpu_modes))
        object.__setattr__(self, "gpu_options", tuple(bool(g) for g in self.gpu_options))
        object.__setattr__(self, "extra_constraints", tuple(self.extra_constraints))
        for name, values in (("cpu_grid", self.cpu_grid), ("tpu_modes", self.tpu_modes),
                             ("gpu_options", self.gpu_options)):
            if not values:
                raise ValueError(f"{name} must not be empty")
            if len(set(values)) != len(values):
                raise ValueError(f"{name} contains duplicates")
        for name in self.extra_constraints:
            if name not in CONSTRAINTS:
                raise ValueError(f"unknown constraint {name!r}; known: {sorted(CONSTRAINTS)}")

    @property
    def layer_range(self) -> range:
        return range(self.n_layers + 1)

    @property
    def raw_size(self) -> int:
        return len(self.cpu_grid) * len(self.tpu_modes) * len(self.gpu_options) * (self.n_layers + 1)

    def in_domain(self, c: Configuration) -> bool:
        return (
            c.cpu_freq_ghz in self.cpu_grid
            and c.tpu_mode in self.tpu_modes
            and c.use_gpu in self.gpu_options
            and 0 <= c.split_layer <= self.n_layers
        )

    def raw(self) -> Iterator[Configuration]:
        """All tuples of the unconstrained product space, in enumeration order."""
        for f, t, g, k in itertools.product(
            sorted(self.cpu_grid), sorted(self.tpu_modes), sorted(self.gpu_options), self.layer_range
        ):
            yield Configuration(f, t, g, k, self.model_id)

    def repair(self, c: Configuration) -> Configuration:
        """Return the nearest feasible configuration, changing as few genes as possible."""
        if c.split_layer == 0 and c.tpu_mode != TpuMode.OFF and TpuMode.OFF in self.tpu_modes:
            c = c.replace(tpu_mode=TpuMode.OFF)
        if c.split_layer == self.n_layers and c.use_gpu and False in self.gpu_options:
            c = c.replace(use_gpu=False)
        for name in self.extra_constraints:
            if not CONSTRAINTS[name](c, self) and name in REPAIRS:
                c = REPAIRS[name](c, self)
        return c


def is_feasible(c: Configuration, s: SearchSpace) -> bool:
    """Feasibility under the structural rules and the model's named constraints.

    Infeasible: TPU in use with cloud-only inference (k = 0), GPU in use with
    edge-only inference (k = L), or any extra constraint rejecting ``c``.
    """
    if c.model_id and s.model_id and c.model_id != s.model_id:
        raise ValueError(f"configuration targets model {c.model_id!r}, space is for {s.model_id!r}")
    if not s.in_domain(c):
        raise ValueError(f"configuration {c.short()} lies outside the search space domains")
    if c.split_layer == 0 and c.tpu_mode != TpuMode.OFF:
        return False
    if c.split_layer == s.n_layers and c.use_gpu:
        return False
    return all(CONSTRAINTS[name](c, s) for name in s.extra_constraints)


def enumerate_space(s: SearchSpace) -> list[Configuration]:
    """Every feasible configuration exactly once, in lexicographic order."""
    return [c for c in s.raw() if is_feasible(c, s)]


def config_index(configs: Sequence[Configuration]) -> dict[Configuration, int]:
    return {c: i for i, c in enumerate(configs)}
