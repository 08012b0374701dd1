"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v``; the criterion lines are
printed even when output capture is on.
"""

from __future__ import annotations

import os
import time
from itertools import product
from pathlib import Path

import numpy as np
import pytest
from scipy import stats

from conftest import tiny_doc
from splitsim.cli import EXIT_OK, build_pool, main, run_experiment, solve
from splitsim.config_space import Configuration, TpuMode, enumerate_space
from splitsim.controller import Policy, select_configuration
from splitsim.cost_model import DEFAULT_BATCH, ObjectiveVector, evaluate_trial, nominal_latency
from splitsim.energy import PowerSeries, integrate_energy
from splitsim.metrics import default_reference, hypervolume
from splitsim.nsga3 import NsgaParams, run_nsga3
from splitsim.pareto import extract_front, front_key, sort_front
from splitsim.profiles import profile_from_dict
from splitsim.rng import substream
from splitsim.workload import WorkloadSpec, generate_workload, raw_samples


@pytest.fixture
def verdict(capsys):
    def emit(number: int, title: str, ok: bool, detail: str) -> None:
        with capsys.disabled():
            print(f"\ncriterion {number:>2} [{title}]: {'PASS' if ok else 'FAIL'} ({detail})")
        assert ok, f"criterion {number} failed: {detail}"

    return emit


def _feasible_oracle(grid, modes, gpus, n_layers, no_tpu=False):
    return sum(1 for f, t, g, k in product(grid, modes, gpus, range(n_layers + 1))
               if not (k == 0 and t != "off") and not (k == n_layers and g) and not (no_tpu and t != "off"))


def test_c01_enumeration(vgg, vit, verdict):
    t0 = time.perf_counter()
    modes = ["off", "std", "max"]
    n_vgg = len(enumerate_space(vgg.space))
    n_vit = len(enumerate_space(vit.space))
    ok = (n_vgg == _feasible_oracle(range(7), modes, [0, 1], 22) == 917
          and n_vit == _feasible_oracle(range(7), modes, [0, 1], 19, no_tpu=True) == 273
          and vgg.space.raw_size == 966)
    dt = time.perf_counter() - t0
    verdict(1, "enumeration oracle", ok and dt < 1.0,
            f"vgg {vgg.space.raw_size}/{n_vgg}, vit {n_vit}, {dt:.2f} s")


def _pairwise_front(points):
    """O(n^2) oracle: keep a point unless another beats it or ties with a smaller config."""
    F = np.array([o.as_tuple() for _, o in points])
    keep = []
    for i, (c, o) in enumerate(points):
        le = np.all(F <= F[i], axis=1)
        lt = np.any(F < F[i], axis=1)
        if np.any(le & lt):
            continue
        same = np.flatnonzero(np.all(F == F[i], axis=1))
        if any(points[j][0] < c for j in same):
            continue
        keep.append((c, o))
    return sorted(keep, key=front_key)


def test_c02_pareto_oracle(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    configs = [Configuration(f, t, g, k, "m")
               for f, t, g, k in product((0.6, 1.2, 1.8), TpuMode, (False, True), range(12))]
    mismatches = 0
    for trial in range(1000):
        n = int(rng.integers(1, 201))
        if trial % 2:
            F = rng.integers(0, 8, size=(n, 3)).astype(float)  # ties and duplicates
        else:
            F = rng.random((n, 3))
        idx = rng.choice(len(configs), size=n, replace=False)
        points = [(configs[i], ObjectiveVector(*row)) for i, row in zip(idx, F)]
        if list(extract_front(points).points) != _pairwise_front(points):
            mismatches += 1
    dt = time.perf_counter() - t0
    verdict(2, "pareto oracle", mismatches == 0 and dt < 10.0, f"{mismatches} mismatches in 1000 clouds, {dt:.1f} s")


def _scheduler_oracle(qos, points):
    ok = [p for p in points if p[1].latency_ms <= qos]
    if ok:
        return min(ok, key=front_key)[0]
    return min(points, key=lambda p: (p[1].latency_ms, front_key(p)))[0]


def test_c03_scheduler_oracle(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    mismatches = 0
    non_monotone = 0
    for _ in range(10_000):
        n = int(rng.integers(1, 21))
        lat = rng.integers(50, 500, n).astype(float)
        en = rng.integers(1, 70, n).astype(float)
        front = sort_front([(Configuration(1.0, TpuMode.OFF, False, i, "m"), ObjectiveVector(t, e, -0.9))
                            for i, (t, e) in enumerate(zip(lat, en))])
        qos = float(rng.uniform(0, 600))
        if select_configuration(qos, front) != _scheduler_oracle(qos, list(front.points)):
            mismatches += 1
        energy = {c: o.energy_j for c, o in front}
        grid = np.concatenate([[0.0], np.unique(lat), np.unique(lat) + 0.5])
        chosen = [energy[select_configuration(q, front)] for q in np.sort(grid)]
        if any(a < b for a, b in zip(chosen, chosen[1:])):
            non_monotone += 1
    dt = time.perf_counter() - t0
    verdict(3, "scheduler oracle", mismatches == 0 and non_monotone == 0 and dt < 10.0,
            f"{mismatches} mismatches, {non_monotone} non-monotone fronts, {dt:.1f} s")


def test_c04_exhaustive_equivalence(verdict):
    t0 = time.perf_counter()
    docs = [tiny_doc(), tiny_doc(search_space={"constraints": ["no-tpu"]}),
            tiny_doc(search_space={"cpu_grid_ghz": [0.6, 1.2, 1.8], "constraints": ["no-gpu"]})]
    checked, failures = 0, 0
    for doc in docs:
        p = profile_from_dict(doc)
        feasible = enumerate_space(p.space)
        assert len(feasible) <= 64
        for seed in range(5):
            obs = {c: evaluate_trial(c, p.model, p.device, DEFAULT_BATCH, substream(seed, "noise", 0, i)).objectives
                   for i, c in enumerate(feasible)}
            res = run_nsga3(p.space, lambda c, i: obs[c], NsgaParams(budget=1.0, seed=seed))
            checked += 1
            failures += res.front != extract_front(obs.items())
    dt = time.perf_counter() - t0
    verdict(4, "nsga3 exhaustive equivalence", failures == 0 and dt < 30.0,
            f"{checked - failures}/{checked} runs equal the exhaustive front, {dt:.1f} s")


def test_c05_budget_sufficiency(vgg, verdict):
    t0 = time.perf_counter()
    ratios = []
    for seed in range(10):
        nsga = solve(vgg, "nsga3", 0.20, seed)
        grid = solve(vgg, "grid", 747, seed)
        ref = default_reference(nsga.front, grid.front)
        ratios.append(hypervolume(nsga.front, ref) / hypervolume(grid.front, ref))
    med = float(np.median(ratios))
    dt = time.perf_counter() - t0
    verdict(5, "20% budget sufficiency", med >= 0.95 and dt < 300,
            f"median HV ratio {med:.4f} (min {min(ratios):.4f}), {dt:.1f} s")


def test_c06_calibrated_endpoints(vgg, vit, verdict):
    t0 = time.perf_counter()
    cases = [(vgg, Configuration(1.2, TpuMode.OFF, True, 0, "vgg16-like"), 90.6),
             (vgg, Configuration(0.6, TpuMode.OFF, False, 20, "vgg16-like"), 5026.8),
             (vit, Configuration(1.4, TpuMode.OFF, True, 0, "vit-like"), 118.8),
             (vit, Configuration(0.6, TpuMode.OFF, False, 18, "vit-like"), 10287.6)]
    errs = [nominal_latency(c, p.model, p.device).t_total_ms / target - 1 for p, c, target in cases]
    # The endpoints are the extremes of the whole space.
    for p, (lo, hi) in ((vgg, (90.6, 5026.8)), (vit, (118.8, 10287.6))):
        lat = [nominal_latency(c, p.model, p.device).t_total_ms for c in enumerate_space(p.space)]
        errs += [min(lat) / lo - 1, max(lat) / hi - 1]
    dt = time.perf_counter() - t0
    worst = max(abs(e) for e in errs)
    verdict(6, "calibrated endpoints", worst <= 0.05 and dt < 60, f"worst deviation {100 * worst:.2f}%, {dt:.2f} s")


def test_c07_directional_testbed(vgg, verdict):
    t0 = time.perf_counter()
    rows = []
    for seed in range(10):
        front = solve(vgg, "nsga3", 0.20, seed).front
        wl = generate_workload(WorkloadSpec(50, 90.6, 5026.8, seed=seed, model_id="vgg16-like"))
        rep = run_experiment(vgg, front, wl, ["adaptive", "cloud", "edge"], "simulate", seed)
        rows.append((rep["cloud"].median("energy_j"), rep["edge"].median("energy_j"),
                     rep["adaptive"].violation_rate, rep["edge"].violation_rate))
    cloud_e, edge_e, dyn_v, edge_v = np.median(rows, axis=0)
    dt = time.perf_counter() - t0
    ok = abs(cloud_e / 68 - 1) <= 0.15 and edge_e < 3 and dyn_v <= 0.10 and edge_v >= 0.20 and dt < 300
    verdict(7, "directional testbed reproduction", ok,
            f"cloud {cloud_e:.1f} J, edge {edge_e:.2f} J, violations adaptive {100 * dyn_v:.0f}% "
            f"edge {100 * edge_v:.0f}%, {dt:.1f} s")


def test_c08_headline_band(vgg, vit, verdict):
    t0 = time.perf_counter()
    savings, satisfaction = {}, {}
    for p in (vgg, vit):
        lo, hi = p.model.qos_bounds_ms
        s_runs, q_runs = [], []
        for seed in range(5):
            front = solve(p, "nsga3", 0.20, seed).front
            pool = build_pool(p, front, seed, [Policy.ADAPTIVE, Policy.CLOUD])
            wl = generate_workload(WorkloadSpec(10_000, lo, hi, seed=seed, model_id=p.model_id))
            rep = run_experiment(p, front, wl, ["adaptive", "cloud"], "replay", seed, pool)
            s_runs.append(rep.energy_saving_vs_cloud["adaptive"])
            q_runs.append(rep["adaptive"].satisfaction_rate)
        savings[p.model_id] = float(np.median(s_runs))
        satisfaction[p.model_id] = float(np.median(q_runs))
    best = max(savings.values())
    dt = time.perf_counter() - t0
    ok = best >= 0.65 and all(0.85 <= v <= 0.95 for v in satisfaction.values()) and dt < 600
    detail = ", ".join(f"{m}: saving {100 * savings[m]:.1f}% satisfied {100 * satisfaction[m]:.1f}%"
                       for m in savings)
    verdict(8, "headline claim band", ok, f"best saving {100 * best:.1f}% (need >= 65%); {detail}; {dt:.1f} s")


def test_c09_energy_integration(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(9)
    worst_linear = 0.0
    for _ in range(200):
        t = np.cumsum(np.concatenate([[0.0], rng.uniform(0.01, 1.0, 30)]))
        p = rng.uniform(0, 20, 31)
        closed = sum((t[i + 1] - t[i]) * (p[i] + p[i + 1]) / 2 for i in range(30))
        worst_linear = max(worst_linear, abs(integrate_energy(PowerSeries(t, p)) - closed))
    worst_smooth = 0.0
    for _ in range(50):
        base, amp, freq, phase = rng.uniform(2, 10), rng.uniform(0, 1), rng.uniform(0.05, 0.5), rng.uniform(0, 6.3)
        fn = lambda x: base + amp * np.sin(2 * np.pi * freq * x + phase)
        end = rng.uniform(5, 30)
        t = np.append(np.arange(0, end, 0.2), end)
        h = end / 100_000
        midpoint = float(np.sum(fn(h * (np.arange(100_000) + 0.5))) * h)
        worst_smooth = max(worst_smooth, abs(integrate_energy(PowerSeries(t, fn(t))) / midpoint - 1))
    dt = time.perf_counter() - t0
    verdict(9, "energy integration", worst_linear < 1e-9 and worst_smooth < 0.01 and dt < 5,
            f"linear error {worst_linear:.1e} J, smooth error {100 * worst_smooth:.3f}%, {dt:.2f} s")


def test_c10_workload(verdict):
    t0 = time.perf_counter()
    exact = True
    for lo, hi in ((90.6, 5026.8), (118.8, 10287.6)):
        for n in (2, 50, 10_000):
            qos = [r.qos_ms for r in generate_workload(WorkloadSpec(n, lo, hi, seed=n))]
            exact &= min(qos) == lo and max(qos) == hi
    pvalue = stats.kstest(raw_samples(WorkloadSpec(10_000, 1.0, 2.0, seed=0)), "expon").pvalue
    dt = time.perf_counter() - t0
    verdict(10, "workload", exact and pvalue > 0.01 and dt < 5,
            f"bounds exact: {exact}, KS p = {pvalue:.3f}, {dt:.2f} s")


def _pipeline(directory: Path, workers: str) -> None:
    directory.mkdir()
    cwd = os.getcwd()
    os.chdir(directory)
    try:
        for argv in (["solve", "--profile", "vgg16-like", "--seed", "11", "--workers", workers, "--out", "."],
                     ["workload", "--profile", "vgg16-like", "--n", "200", "--seed", "11", "--out", "."],
                     ["experiment", "--profile", "vgg16-like", "--front", "front.csv", "--workload",
                      "workload.csv", "--seed", "11", "--out", "sim"],
                     ["experiment", "--profile", "vgg16-like", "--front", "front.csv", "--workload",
                      "workload.csv", "--mode", "replay", "--seed", "11", "--out", "replay"]):
            assert main(argv) == EXIT_OK
    finally:
        os.chdir(cwd)


def test_c11_determinism(tmp_path, verdict):
    t0 = time.perf_counter()
    _pipeline(tmp_path / "serial", "1")
    _pipeline(tmp_path / "parallel", "0")
    files = sorted(p.relative_to(tmp_path / "serial") for p in (tmp_path / "serial").rglob("*") if p.is_file())
    differing = [str(f) for f in files if (tmp_path / "serial" / f).read_bytes() != (tmp_path / "parallel" / f).read_bytes()]
    dt = time.perf_counter() - t0
    verdict(11, "determinism", not differing and len(files) >= 10 and dt < 300,
            f"{len(files) - len(differing)}/{len(files)} files identical at 1 and {os.cpu_count()} workers, {dt:.1f} s")
