from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import tiny_doc
from splitsim.cli import solve
from splitsim.config_space import Configuration, DecisionClass, TpuMode
from splitsim.controller import (
    ControllerState,
    InfeasibleRequest,
    Policy,
    Request,
    apply_configuration,
    baseline_policy,
    changed_settings,
    execute_request,
    run_policy,
    select_configuration,
    selection_time,
)
from splitsim.cost_model import ObjectiveVector
from splitsim.pareto import front_key, sort_front
from splitsim.profiles import profile_from_dict
from splitsim.rng import substream
from splitsim.workload import WorkloadSpec, generate_workload


def cfg(i: int) -> Configuration:
    return Configuration(1.0, TpuMode.OFF, False, i, "m")


def make_front(pairs):
    """(energy, latency) pairs -> sorted front with constant accuracy."""
    return sort_front([(cfg(i), ObjectiveVector(t, e, -0.9)) for i, (e, t) in enumerate(pairs)])


def oracle(qos, front):
    points = list(front.points)
    ok = [p for p in points if p[1].latency_ms <= qos]
    if ok:
        return min(ok, key=front_key)[0]
    return min(points, key=lambda p: (p[1].latency_ms, front_key(p)))[0]


def test_examples():
    front = make_front([(2, 400), (60, 100)])
    assert select_configuration(450, front) == front[0][0]
    assert select_configuration(150, front) == front[1][0]
    assert select_configuration(50, front) == front[1][0]


def test_empty_front():
    with pytest.raises(ValueError):
        select_configuration(100, make_front([]))


def test_fallback_tie_keeps_cheaper_entry():
    front = make_front([(1, 300), (2, 100), (3, 100)])
    assert select_configuration(10, front) == front[1][0]


fronts = st.lists(st.tuples(st.integers(1, 20), st.integers(10, 60)), min_size=1, max_size=15)


@given(fronts, st.integers(0, 80))
def test_matches_oracle(pairs, qos):
    front = make_front(pairs)
    chosen = select_configuration(qos, front)
    assert chosen == oracle(qos, front)
    assert chosen in front.configs


@given(fronts)
def test_energy_monotone_in_qos(pairs):
    front = make_front(pairs)
    energy = {c: o.energy_j for c, o in front}
    values = [energy[select_configuration(q, front)] for q in range(0, 70)]
    assert all(a >= b for a, b in zip(values, values[1:]))


def test_apply_cost_only_for_changes(vgg):
    c = Configuration(1.8, TpuMode.STD, True, 5, "vgg16-like")
    rng = np.random.default_rng(0)
    assert apply_configuration(c, c, vgg.device, rng, vgg.model) == 0.0
    assert changed_settings(c, c.replace(cpu_freq_ghz=1.0), vgg.model) == ["frequency"]
    assert changed_settings(c, c.replace(use_gpu=False), vgg.model) == ["cloud"]
    # Moving to edge-only does not message the cloud.
    assert "cloud" not in changed_settings(c, c.replace(split_layer=22, use_gpu=False), vgg.model)


def test_full_change_overhead(vgg):
    prev = Configuration(0.6, TpuMode.OFF, False, 22, "vgg16-like")
    nxt = Configuration(1.8, TpuMode.STD, True, 5, "vgg16-like")
    assert changed_settings(prev, nxt, vgg.model) == ["frequency", "tpu", "head", "cloud"]
    rng = np.random.default_rng(1)
    costs = np.array([apply_configuration(prev, nxt, vgg.device, rng, vgg.model) for _ in range(5000)])
    assert 120 <= np.median(costs) <= 160
    assert costs.max() <= 500


def test_selection_time_bound(vgg):
    rng = np.random.default_rng(2)
    times = [selection_time(15, vgg.device, rng) for _ in range(5000)]
    assert max(times) <= 12.0
    assert np.median(times) < 5.0


def test_baselines(vgg, vit):
    assert baseline_policy("cloud", None, vgg.model) == Configuration(1.8, TpuMode.OFF, True, 0, "vgg16-like")
    assert baseline_policy("edge", None, vgg.model) == Configuration(1.8, TpuMode.MAX, False, 22, "vgg16-like")
    assert baseline_policy("edge", None, vit.model) == Configuration(1.8, TpuMode.OFF, False, 19, "vit-like")
    front = make_front([(2, 400), (60, 100), (30, 250)])
    assert baseline_policy("energy", front, vgg.model) == front[0][0]
    assert baseline_policy("latency", front, vgg.model) == front[2][0]
    with pytest.raises(ValueError):
        baseline_policy("latency", make_front([]), vgg.model)
    with pytest.raises(ValueError):
        baseline_policy("adaptive", front, vgg.model)


def test_edge_baseline_signals_missing_edge_only():
    p = profile_from_dict(tiny_doc(search_space={"constraints": ["no-edge-only"]}))
    with pytest.raises(InfeasibleRequest):
        baseline_policy("edge", None, p.model)


def test_request_validation():
    with pytest.raises(ValueError):
        Request(0, 0.0)
    with pytest.raises(ValueError):
        Request(0, 10.0, n_inferences=0)


@pytest.fixture(scope="module")
def vgg_front(vgg):
    return solve(vgg, "nsga3", 0.20, seed=0).front


def test_execute_request(vgg, vgg_front):
    state = ControllerState()
    rng = substream(0, "noise", 1, 0)
    d, obs = execute_request(Request(0, math.inf), vgg_front, vgg.model, vgg.device, state, rng)
    assert d.config == vgg_front[0][0] and state.current == d.config
    assert d.decision is d.config.decision_class(22)
    fastest = min(o.latency_ms for o in vgg_front.objectives)
    d2, obs2 = execute_request(Request(1, fastest / 2), vgg_front, vgg.model, vgg.device, state, rng)
    assert d2.predicted.latency_ms == fastest
    assert obs2.latency.t_total_ms > fastest / 2


def test_runs_are_reproducible(vgg, vgg_front):
    wl = generate_workload(WorkloadSpec(50, 90.6, 5026.8, seed=3))
    a = run_policy(Policy.ADAPTIVE, wl, vgg_front, vgg.model, vgg.device, substream(3, "noise", 1, 0))
    b = run_policy(Policy.ADAPTIVE, wl, vgg_front, vgg.model, vgg.device, substream(3, "noise", 1, 0))
    assert a == b


def test_decision_pattern_is_directional(vgg):
    # Fifty VGG requests land mostly on the edge, some splits, very few cloud-only.
    tallies = []
    for seed in range(10):
        front = solve(vgg, "nsga3", 0.20, seed=seed).front
        wl = generate_workload(WorkloadSpec(50, 90.6, 5026.8, seed=seed))
        recs = run_policy("adaptive", wl, front, vgg.model, vgg.device, substream(seed, "noise", 1, 0))
        classes = [r.decision.decision for r in recs]
        tallies.append([classes.count(DecisionClass.EDGE_ONLY), classes.count(DecisionClass.SPLIT),
                        classes.count(DecisionClass.CLOUD_ONLY)])
    edge, split, cloud = np.median(tallies, axis=0)
    assert abs(edge - 37) <= 3
    assert abs(split - 11) <= 3
    assert abs(cloud - 2) <= 3
