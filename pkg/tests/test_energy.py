from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, strategies as st

from splitsim.energy import PiecewisePower, PowerSeries, integrate_energy


def test_constant_trace():
    assert integrate_energy([(0.0, 5.0), (2.0, 5.0)]) == pytest.approx(10.0)


def test_ramp_is_exact():
    # 0 W to 10 W over 4 s: a triangle of 20 J.
    assert integrate_energy([(0.0, 0.0), (1.0, 2.5), (4.0, 10.0)]) == pytest.approx(20.0)


@given(st.lists(st.tuples(st.floats(0.01, 5.0), st.floats(0.0, 50.0)), min_size=2, max_size=40))
def test_piecewise_linear_closed_form(segments):
    # Piecewise-linear power through the sample points integrates exactly to
    # sum of (p_i + p_{i+1}) / 2 * dt, computed here segment by segment as
    # rectangle plus triangle.
    t = np.concatenate([[0.0], np.cumsum([dt for dt, _ in segments])])
    p = np.array([segments[0][1]] + [w for _, w in segments])
    expected = 0.0
    for i in range(len(t) - 1):
        lo, hi = min(p[i], p[i + 1]), max(p[i], p[i + 1])
        expected += lo * (t[i + 1] - t[i]) + 0.5 * (hi - lo) * (t[i + 1] - t[i])
    assert integrate_energy(PowerSeries(t, p)) == pytest.approx(expected, rel=1e-9, abs=1e-9)


def _midpoint(fn, a, b, n=200_000):
    h = (b - a) / n
    return float(np.sum(fn(a + h * (np.arange(n) + 0.5))) * h)


@pytest.mark.parametrize("seed", range(20))
def test_smooth_traces_match_midpoint_oracle(seed):
    rng = np.random.default_rng(seed)
    base = rng.uniform(2.0, 10.0)
    amps = rng.uniform(0.0, 1.0, 4) * base / 8
    freqs = rng.uniform(0.05, 0.5, 4)
    phases = rng.uniform(0, 2 * np.pi, 4)

    def power(t):
        t = np.asarray(t, dtype=float)[..., None]
        return base + np.sum(amps * np.sin(2 * np.pi * freqs * t + phases), axis=-1)

    end = rng.uniform(5.0, 30.0)
    t = np.append(np.arange(0.0, end, 0.2), end)
    got = integrate_energy(PowerSeries(t, power(t)))
    assert got == pytest.approx(_midpoint(power, 0.0, end), rel=0.01)


def test_rejects_bad_series():
    with pytest.raises(ValueError):
        integrate_energy([(0.0, 1.0)])
    with pytest.raises(ValueError):
        integrate_energy([(0.0, 1.0), (0.0, 2.0)])
    with pytest.raises(ValueError):
        PowerSeries(np.zeros(3), np.zeros(2))


def test_piecewise_sampling_and_exact_energy():
    sig = PiecewisePower([0.0, 1.0, 1.5], [4.0, 2.0])
    assert sig.exact_energy() == pytest.approx(5.0)
    s = sig.sample(0.2)
    assert s.times_s[0] == 0.0 and s.times_s[-1] == 1.5
    assert np.all(np.diff(s.times_s) > 0)
    assert list(sig.at(np.array([0.0, 0.99, 1.0, 1.5]))) == [4.0, 4.0, 2.0, 2.0]
    # Meter error is bounded by one interval times the level jump.
    assert abs(integrate_energy(s) - sig.exact_energy()) <= 0.2 * 2.0


def test_sampling_interval_must_be_positive():
    with pytest.raises(ValueError):
        PiecewisePower([0.0, 1.0], [1.0]).sample(0.0)
