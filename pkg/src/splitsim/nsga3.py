"""NSGA-III over the discrete configuration space, plus a shuffled grid sampler.

Every distinct configuration is evaluated at most once (memo cache); the
evaluation budget counts distinct evaluations only. Evaluations inside a
generation may run on a thread pool, but trial indices are assigned in
individual order before dispatch and results are consumed in that same
order, so a run is reproducible from its seed at any worker count.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import combinations
from typing import Callable, Sequence

import numpy as np

from .config_space import Configuration, SearchSpace, enumerate_space, is_feasible
from .cost_model import ObjectiveVector
from .pareto import ParetoFront, extract_front
from .rng import substream

log = logging.getLogger(__name__)

Evaluator = Callable[[Configuration, int], ObjectiveVector]


@dataclass(frozen=True)
class NsgaParams:
    population: int = 32
    divisions: int = 6
    crossover_prob: float = 0.9
    mutation_prob: float = 0.25
    budget: float = 0.20
    seed: int = 0
    # Generations without a new evaluation before unevaluated immigrants are injected.
    stall_limit: int = 3
    max_generations: int = 10_000

    def __post_init__(self) -> None:
        if self.budget <= 0 or (self.budget > 1 and self.budget != int(self.budget)):
            raise ValueError("budget is a fraction in (0, 1] or an integer trial count")
        for p in (self.crossover_prob, self.mutation_prob):
            if not 0 <= p <= 1:
                raise ValueError("probabilities must lie in [0, 1]")
        if self.divisions < 1:
            raise ValueError("need at least one reference-point division")
        n_ref = math.comb(self.divisions + 2, 2)
        if self.population < n_ref:
            raise ValueError(f"population {self.population} smaller than {n_ref} reference points")


@dataclass(frozen=True)
class Trial:
    index: int
    config: Configuration
    objectives: ObjectiveVector


@dataclass
class SearchResult:
    trials: list[Trial]
    front: ParetoFront
    # Rank-0 objective sets of the population after each generation.
    history: list[np.ndarray] = field(default_factory=list)
    final_rank0: list[Configuration] = field(default_factory=list)


def budget_trials(budget: float, n_feasible: int) -> int:
    """Distinct evaluations allowed: ceil(fraction * |feasible|), or an absolute count above 1."""
    if budget > 1:
        return min(int(budget), n_feasible)
    return min(n_feasible, math.ceil(budget * n_feasible - 1e-9))


# ---------------------------------------------------------------------------
# NSGA-III building blocks


def das_dennis(n_obj: int, divisions: int) -> np.ndarray:
    """Uniform reference points on the unit simplex (C(p + m - 1, m - 1) of them)."""
    points = []
    for bars in combinations(range(divisions + n_obj - 1), n_obj - 1):
        prev = -1
        parts = []
        for b in bars:
            parts.append(b - prev - 1)
            prev = b
        parts.append(divisions + n_obj - 2 - prev)
        points.append(parts)
    return np.asarray(points, dtype=float) / divisions


def fast_non_dominated_sort(F: np.ndarray) -> list[list[int]]:
    """Deb's fast non-dominated sort; returns fronts as lists of row indices."""
    n = len(F)
    if n == 0:
        return []
    le = np.all(F[:, None, :] <= F[None, :, :], axis=2)
    lt = np.any(F[:, None, :] < F[None, :, :], axis=2)
    dom = le & lt  # dom[i, j]: i dominates j
    counts = dom.sum(axis=0)
    fronts: list[list[int]] = []
    current = [i for i in range(n) if counts[i] == 0]
    while current:
        fronts.append(current)
        nxt = []
        for i in current:
            for j in np.flatnonzero(dom[i]):
                counts[j] -= 1
                if counts[j] == 0:
                    nxt.append(int(j))
        current = sorted(nxt)
    return fronts


def normalize(F: np.ndarray) -> np.ndarray:
    """Translate by the ideal point and scale by hyperplane intercepts.

    Extreme points come from the achievement scalarizing function on each
    axis. When they are degenerate (singular system or non-positive
    intercepts) the per-objective maxima are used instead.
    """
    ideal = F.min(axis=0)
    Fp = F - ideal
    m = F.shape[1]
    weights = np.full((m, m), 1e-6) + np.eye(m) * (1 - 1e-6)
    extremes = np.empty((m, m))
    for j in range(m):
        asf = np.max(Fp / weights[j], axis=1)
        extremes[j] = Fp[int(np.argmin(asf))]
    maxima = Fp.max(axis=0)
    intercepts = None
    try:
        b = np.linalg.solve(extremes, np.ones(m))
        with np.errstate(divide="ignore"):
            cand = 1.0 / b
        if np.all(np.isfinite(cand)) and np.all(cand > 1e-10):
            intercepts = cand
    except np.linalg.LinAlgError:
        pass
    if intercepts is None:
        intercepts = maxima.copy()
    intercepts = np.where(intercepts > 1e-10, intercepts, np.where(maxima > 1e-10, maxima, 1.0))
    return Fp / intercepts


def associate(Fn: np.ndarray, refs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Nearest reference direction (by perpendicular distance) for each row."""
    unit = refs / np.linalg.norm(refs, axis=1, keepdims=True)
    proj = Fn @ unit.T
    dist2 = np.sum(Fn ** 2, axis=1, keepdims=True) - proj ** 2
    dist = np.sqrt(np.maximum(dist2, 0.0))
    nearest = np.argmin(dist, axis=1)
    return nearest, dist[np.arange(len(Fn)), nearest]


def environmental_selection(
    F: np.ndarray, n_select: int, refs: np.ndarray, rng: np.random.Generator
) -> list[int]:
    fronts = fast_non_dominated_sort(F)
    chosen: list[int] = []
    last: list[int] = []
    for front in fronts:
        if len(chosen) + len(front) <= n_select:
            chosen.extend(front)
            if len(chosen) == n_select:
                return chosen
        else:
            last = front
            break
    if not last:
        return chosen
    pool = chosen + last
    Fn = normalize(F[pool])
    niche, dist = associate(Fn, refs)
    n_chosen = len(chosen)
    rho = np.bincount(niche[:n_chosen], minlength=len(refs)).astype(int)
    candidates = {j: [] for j in range(len(refs))}
    for pos in range(n_chosen, len(pool)):
        candidates[int(niche[pos])].append(pos)
    open_refs = np.ones(len(refs), dtype=bool)
    remaining = n_select - n_chosen
    while remaining > 0:
        live = np.flatnonzero(open_refs)
        min_rho = rho[live].min()
        j = int(rng.choice(live[rho[live] == min_rho]))
        members = candidates[j]
        if not members:
            open_refs[j] = False
            continue
        if rho[j] == 0:
            pick = min(members, key=lambda p: (dist[p], p))
        else:
            pick = members[int(rng.integers(len(members)))]
        members.remove(pick)
        chosen.append(pool[pick])
        rho[j] += 1
        remaining -= 1
    return chosen


# ---------------------------------------------------------------------------
# Genome handling


class _Codec:
    def __init__(self, space: SearchSpace):
        self.space = space
        self.domains = (
            tuple(sorted(space.cpu_grid)),
            tuple(sorted(space.tpu_modes)),
            tuple(sorted(space.gpu_options)),
            tuple(space.layer_range),
        )

    def decode(self, genes: Sequence[int]) -> Configuration:
        f, t, g, k = (d[i] for d, i in zip(self.domains, genes))
        return Configuration(f, t, g, k, self.space.model_id)

    def encode(self, c: Configuration) -> tuple[int, int, int, int]:
        return (
            self.domains[0].index(c.cpu_freq_ghz),
            self.domains[1].index(c.tpu_mode),
            self.domains[2].index(c.use_gpu),
            self.domains[3].index(c.split_layer),
        )


class _Archive:
    """Memo cache of evaluated configurations with budget accounting."""

    def __init__(self, evaluator: Evaluator, budget: int, workers: int):
        self.evaluator = evaluator
        self.budget = budget
        self.workers = max(1, int(workers))
        self.trials: list[Trial] = []
        self.by_config: dict[Configuration, Trial] = {}

    @property
    def exhausted(self) -> bool:
        return len(self.trials) >= self.budget

    def evaluate(self, configs: Sequence[Configuration]) -> list[Trial | None]:
        """Evaluate unseen configurations in order until the budget runs out."""
        pending: list[tuple[int, Configuration]] = []
        queued: set[Configuration] = set()
        next_index = len(self.trials)
        for c in configs:
            if c in self.by_config or c in queued:
                continue
            if next_index + len(pending) >= self.budget:
                break
            pending.append((next_index + len(pending), c))
            queued.add(c)
        if pending:
            if self.workers > 1 and len(pending) > 1:
                with ThreadPoolExecutor(max_workers=self.workers) as pool:
                    results = list(pool.map(lambda ic: self.evaluator(ic[1], ic[0]), pending))
            else:
                results = [self.evaluator(c, i) for i, c in pending]
            for (i, c), obj in zip(pending, results):
                trial = Trial(i, c, obj)
                self.trials.append(trial)
                self.by_config[c] = trial
        return [self.by_config.get(c) for c in configs]


def _objective_matrix(trials: Sequence[Trial]) -> np.ndarray:
    return np.array([t.objectives.as_tuple() for t in trials], dtype=float).reshape(-1, 3)


def run_nsga3(
    space: SearchSpace,
    evaluator: Evaluator,
    params: NsgaParams = NsgaParams(),
    workers: int = 1,
) -> SearchResult:
    feasible = enumerate_space(space)
    if not feasible:
        raise ValueError("the search space has no feasible configuration")
    budget = budget_trials(params.budget, len(feasible))
    # A space smaller than the population is simply evaluated in full.
    pop_size = min(params.population, len(feasible))
    if budget < pop_size:
        raise ValueError(f"budget of {budget} trials is smaller than the population ({pop_size})")

    rng = substream(params.seed, "solver")
    codec = _Codec(space)
    refs = das_dennis(3, params.divisions)
    archive = _Archive(evaluator, budget, workers)

    init_idx = rng.choice(len(feasible), size=pop_size, replace=False)
    population = [t for t in archive.evaluate([feasible[i] for i in sorted(init_idx)]) if t is not None]
    history: list[np.ndarray] = []
    stall = 0

    for generation in range(params.max_generations):
        if archive.exhausted or len(archive.trials) == len(feasible):
            break
        F = _objective_matrix(population)
        ranks = np.empty(len(population), dtype=int)
        for r, front in enumerate(fast_non_dominated_sort(F)):
            ranks[front] = r

        children: list[Configuration] = []
        while len(children) < pop_size:
            a = _tournament(ranks, rng)
            b = _tournament(ranks, rng)
            ga = list(codec.encode(population[a].config))
            gb = list(codec.encode(population[b].config))
            if rng.random() < params.crossover_prob:
                swap = rng.random(4) < 0.5
                for i in np.flatnonzero(swap):
                    ga[i], gb[i] = gb[i], ga[i]
            for genes in (ga, gb):
                for i, dom in enumerate(codec.domains):
                    if rng.random() < params.mutation_prob:
                        genes[i] = int(rng.integers(len(dom)))
                child = _repair(codec.decode(genes), space, feasible, rng)
                children.append(child)
        children = children[:pop_size]

        if stall >= params.stall_limit:
            unseen = [c for c in feasible if c not in archive.by_config]
            seen_child = [i for i, c in enumerate(children) if c in archive.by_config]
            picks = rng.permutation(len(unseen))[: len(seen_child)]
            for slot, p in zip(seen_child, picks):
                children[slot] = unseen[int(p)]

        before = len(archive.trials)
        offspring = [t for t in archive.evaluate(children) if t is not None]
        stall = stall + 1 if len(archive.trials) == before else 0

        merged: list[Trial] = []
        seen: set[Configuration] = set()
        for t in population + offspring:
            if t.config not in seen:
                seen.add(t.config)
                merged.append(t)
        keep = environmental_selection(_objective_matrix(merged), min(pop_size, len(merged)), refs, rng)
        population = [merged[i] for i in sorted(keep)]
        F = _objective_matrix(population)
        history.append(F[fast_non_dominated_sort(F)[0]])
    else:
        log.warning("NSGA-III stopped at the generation cap with %d/%d trials", len(archive.trials), budget)

    F = _objective_matrix(population)
    rank0 = [population[i].config for i in fast_non_dominated_sort(F)[0]]
    front = extract_front((t.config, t.objectives) for t in archive.trials)
    return SearchResult(archive.trials, front, history, rank0)


def _tournament(ranks: np.ndarray, rng: np.random.Generator) -> int:
    i, j = (int(x) for x in rng.integers(len(ranks), size=2))
    if ranks[i] != ranks[j]:
        return i if ranks[i] < ranks[j] else j
    return i if rng.random() < 0.5 else j


def _repair(c: Configuration, space: SearchSpace, feasible: Sequence[Configuration],
            rng: np.random.Generator) -> Configuration:
    c = space.repair(c)
    if is_feasible(c, space):
        return c
    # A constraint without a minimal repair: fall back to a random feasible genome.
    return feasible[int(rng.integers(len(feasible)))]


def grid_search(
    space: SearchSpace,
    evaluator: Evaluator,
    fraction: float,
    seed: int = 0,
    workers: int = 1,
) -> SearchResult:
    """Evaluate the first ceil(fraction * |feasible|) configurations of a seeded shuffle."""
    if fraction <= 0 or (fraction > 1 and fraction != int(fraction)):
        raise ValueError("fraction must lie in (0, 1], or be an integer trial count")
    feasible = enumerate_space(space)
    n = budget_trials(fraction, len(feasible))
    order = substream(seed, "solver", 1).permutation(len(feasible))
    archive = _Archive(evaluator, n, workers)
    archive.evaluate([feasible[i] for i in order[:n]])
    front = extract_front((t.config, t.objectives) for t in archive.trials)
    return SearchResult(archive.trials, front)
