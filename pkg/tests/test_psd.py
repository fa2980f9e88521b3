import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chaoslab import psd
from chaoslab.coupling import dft_subcolumn_system
from chaoslab.rng import stream


def test_sqrt_identity_and_diagonal():
    assert np.allclose(psd.sym_sqrt(np.eye(4)), np.eye(4))
    assert np.allclose(psd.sym_sqrt(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]))


def test_sqrt_two_by_two():
    q = psd.sym_sqrt(np.array([[2.0, 1.0], [1.0, 2.0]]))
    e1 = np.array([1.0, -1.0]) / math.sqrt(2)
    e2 = np.array([1.0, 1.0]) / math.sqrt(2)
    assert np.allclose(q @ e1, e1)
    assert np.allclose(q @ e2, math.sqrt(3) * e2)


def test_sqrt_rejects_indefinite():
    with pytest.raises(psd.NotPSDError, match="eigenvalue"):
        psd.sym_sqrt(np.diag([1.0, -0.5]))


def test_symmetrize_is_exact():
    a = np.arange(9.0).reshape(3, 3)
    s = psd.symmetrize(a)
    assert np.array_equal(s, s.T)
    assert np.array_equal(np.triu(s), np.triu(a))


def test_pseudo_inverse_examples():
    assert np.allclose(psd.pseudo_inverse(np.diag([2.0, 0.0])), np.diag([0.5, 0.0]))
    assert np.allclose(psd.pseudo_inverse(np.zeros((3, 3))), 0)
    v = stream(4).standard_normal(5)
    m = np.outer(v, v)
    mp = psd.pseudo_inverse(m)
    assert np.allclose(mp, m / np.dot(v, v) ** 2)
    assert np.allclose(m @ mp @ m, m)


def test_op_norm_examples():
    assert psd.op_norm(np.array([[0.0, 1.0], [1.0, 0.0]])) == pytest.approx(1.0)
    assert psd.op_norm(np.diag([3.0, -5.0])) == pytest.approx(5.0)


def test_op_norm_power_iteration_agrees():
    rng = stream(5)
    a = rng.standard_normal((50, 50))
    a = (a + a.T) / math.sqrt(100)
    assert psd.power_norm(a, rng) == pytest.approx(psd.op_norm(a), abs=1e-6)


def test_sqrt_gap_examples():
    assert psd.sqrt_gap_ratio(np.zeros((3, 3)), 4 * np.eye(3)) == pytest.approx(1.0)
    assert psd.sqrt_gap_ratio(np.array([[9.0]]), np.array([[16.0]])) == pytest.approx(0.5)


def test_sqrt_gap_campaign_small():
    r = psd.sqrt_gap_campaign(stream(6), 400, (2, 20))
    assert r["max_ratio"] <= 3 and r["violations"] == 0
    assert r["strong_violations"] == 0


def test_monotone_examples():
    assert psd.sqrt_monotone_check(np.eye(3), 4 * np.eye(3))
    p = psd.random_psd(stream(7), 4)
    assert psd.sqrt_monotone_check(p, p)
    assert psd.monotone_campaign(stream(8), 300, (2, 20))["violations"] == 0


def test_bernstein_xm_examples():
    assert psd.bernstein_xm(1, 1, 1, math.e, 1) == pytest.approx(4.0)
    assert psd.bernstein_xm(1, 1, 1, math.e, 1e-12) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        psd.bernstein_xm(1, 1, 1, 2.0, 1)


def test_bernstein_xm_inequality_random():
    rng = stream(9)
    for _ in range(1000):
        a, b, c = rng.uniform(0.01, 10, 3)
        C = math.exp(rng.uniform(1, 10))
        m = rng.uniform(0.01, 10)
        x = psd.bernstein_xm(a, b, c, C, m)
        assert C * math.exp(-c * x * x / (a + b * x)) <= math.exp(-m) * (1 + 1e-12)


def test_matrix_bernstein_limits():
    assert psd.matrix_bernstein_bound(1.0, 1.0, 5, 1e-9) == pytest.approx(10.0)
    assert psd.matrix_bernstein_bound(1.0, 1e-12, 1, math.sqrt(2)) == pytest.approx(2 * math.exp(-1), rel=1e-6)


def test_bernstein_frequencies_below_bound():
    v = dft_subcolumn_system(2000, 10).vectors
    s2, R = psd.bernstein_parameters(v, 0.37)
    x = psd.bernstein_grid(s2, R, 10)
    freq, bound, _, _ = psd.bernstein_empirics(v, 0.37, x, 500, stream(10))
    assert np.all(freq <= bound)


@st.composite
def psd_pairs(draw):
    d = draw(st.integers(2, 8))
    seed = draw(st.integers(0, 2 ** 32))
    rng = stream(seed)
    return psd.random_gap_pair(rng, d)


@settings(max_examples=60, deadline=None)
@given(psd_pairs())
def test_sqrt_gap_at_most_three(pair):
    p, q = pair
    assert psd.sqrt_gap_ratio(p, q) <= 3.0


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 10), st.integers(0, 2 ** 32))
def test_sqrt_squares_back(d, seed):
    p = psd.random_psd(stream(seed), d)
    r = psd.sym_sqrt(p)
    assert np.allclose(r @ r, p, atol=1e-9 * max(1.0, np.abs(p).max()))
    assert np.array_equal(r, r.T) or np.allclose(r, r.T, atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 8), st.integers(0, 2 ** 32))
def test_strong_pairs_at_most_one(d, seed):
    p, q = psd.random_strong_pair(stream(seed), d)
    assert psd.sqrt_gap_ratio(p, q) <= 1.0 + 1e-12
