import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from chaoslab import skorokhod as S
from chaoslab.noise import NoiseSpec, ks_distance
from chaoslab.rng import stream


def test_rademacher_pairs_are_unit():
    u, v = S.hall_pair_sample(NoiseSpec.rademacher(), stream(1), 500)
    assert np.all(u == -1) and np.all(v == 1)


def test_zero_atom_maps_to_zero_pair():
    vals = np.array([-1.0, 0.0, 2.0])
    probs = np.array([0.25, 0.375, 0.375])
    probs[0] = 2 * probs[2]  # centered: -a + 2b = 0
    probs /= probs.sum()
    u, v = S.hall_pair_sample_discrete(vals, probs, stream(2), 200_000)
    zero = (u == 0) & (v == 0)
    se = math.sqrt(probs[1] * (1 - probs[1]) / u.size)
    assert abs(zero.mean() - probs[1]) < 4 * se


def test_uniform_embedding_ks():
    spec = NoiseSpec.uniform()
    _, value, _ = S.embed(spec, 40_000, stream(3), dt=1e-3)
    assert ks_distance(value, spec) < 0.015


def test_symmetric_pair_hits_each_side_half():
    u = np.full(100_000, -1.0)
    tau, val, _ = S.simulate_exits(u, -u, 1e-2, stream(4))
    p = np.mean(val == 1.0)
    assert abs(p - 0.5) < 3 * math.sqrt(0.25 / u.size)
    se = tau.std() / math.sqrt(u.size)
    assert abs(tau.mean() - 1.0) < 3 * se


def test_gamblers_ruin_ratio():
    u = np.full(100_000, -1.0)
    _, val, _ = S.simulate_exits(u, np.full(u.size, 2.0), 1e-2, stream(5))
    p = np.mean(val == 2.0)
    assert abs(p - 1 / 3) < 3 * math.sqrt(2 / 9 / u.size)


def test_stopped_path_value_on_pair():
    path = S.simulate_stopped_path((-0.5, 1.5), 1e-3, stream(6))
    assert path.value in (-0.5, 1.5) and path.tau > 0 and not path.truncated
    with pytest.raises(ValueError):
        S.simulate_stopped_path((0.5, 1.0))


def test_rademacher_survival_at_one():
    # eigen-series for the exit of (-1, 1); frozen from a 30-digit mpmath sum
    assert S.rademacher_survival(1.0) == pytest.approx(0.3707774297995239, abs=1e-13)
    assert float(S.exit_survival(-1.0, 1.0, 1.0)) == pytest.approx(S.rademacher_survival(1.0), abs=1e-12)


def test_exit_survival_series_switch_is_continuous():
    # the small-time image sum and the eigen series meet at s = 0.2
    w = 1.7
    t = 0.2 * w * w
    a = S.exit_survival(-0.6, 1.1, t * (1 - 1e-12))
    b = S.exit_survival(-0.6, 1.1, t * (1 + 1e-12))
    assert abs(a - b) < 1e-10


def test_tail_integral_matches_quadrature():
    for t in (0.0, 0.05, 0.3, 2.0):
        ref = integrate.quad(lambda s: float(S.exit_survival(-0.7, 1.3, s)), t, 60, limit=200)[0]
        assert float(S.exit_tail_integral(-0.7, 1.3, t)) == pytest.approx(ref, abs=1e-9)


@pytest.mark.parametrize("spec", [NoiseSpec.rademacher(), NoiseSpec.uniform(), NoiseSpec.gaussian(),
                                  NoiseSpec.two_point(0.3)], ids=str)
def test_survival_function_integrates_to_one(spec):
    sf = S.survival_function(spec)
    assert sf.p(0.0) == pytest.approx(1.0)
    assert sf.tail_integral(0.0) == pytest.approx(1.0, abs=2e-3)
    t = np.linspace(0, 10, 200)
    assert np.all(np.diff(sf.p(t)) <= 1e-12)


def test_monte_carlo_curve():
    spec = NoiseSpec.rademacher()
    t = np.linspace(0, 8, 81)
    c = S.survival_curve(spec, t, 40_000, stream(7), dt=1e-2)
    assert c.p[0] == 1.0
    assert abs(c.p[10] - S.rademacher_survival(1.0)) < 0.01
    assert c.integral() == pytest.approx(1.0, abs=0.02)


def test_survival_curve_rejects_bad_grid():
    with pytest.raises(ValueError):
        S.survival_curve(NoiseSpec.rademacher(), [0.5, 1.0], 10, stream(0))


@settings(max_examples=30, deadline=None)
@given(st.floats(0.05, 3.0), st.floats(0.05, 3.0), st.floats(0.0, 5.0))
def test_exit_survival_is_a_probability(a, b, t):
    p = float(S.exit_survival(-a, b, t))
    assert -1e-12 <= p <= 1 + 1e-12
    assert float(S.exit_survival(-a, b, t + 0.1)) <= p + 1e-12


@settings(max_examples=20, deadline=None)
@given(st.floats(0.1, 2.0), st.floats(0.1, 2.0))
def test_exit_mean_is_product(a, b):
    # E tau = |u v| for the exit of (u, v) from 0
    assert float(S.exit_tail_integral(-a, b, 0.0)) == pytest.approx(a * b, rel=1e-9)
