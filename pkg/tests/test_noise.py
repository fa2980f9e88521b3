import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from chaoslab.noise import NoiseKind, NoiseSpec, ks_distance, parse_spec, tail_beta
from chaoslab.rng import stream

ALL = [NoiseSpec.gaussian(), NoiseSpec.rademacher(), NoiseSpec.uniform(),
       NoiseSpec.two_point(0.3), NoiseSpec.truncated_exp(1.0), NoiseSpec.truncated_exp(0.5)]


@pytest.mark.parametrize("spec", ALL, ids=str)
def test_unit_moments(spec):
    m, v, _ = spec.moments()
    assert abs(m) < 1e-10
    assert abs(v - 1) < 1e-10


@pytest.mark.parametrize("spec", ALL, ids=str)
def test_tail_bound_on_probe_grid(spec):
    t = np.arange(1, 11, dtype=float)
    assert np.all(spec.tail_prob(t) <= spec.tail_C * np.exp(-spec.tail_c * t ** spec.alpha) * (1 + 1e-9))


def test_rademacher_support():
    x = NoiseSpec.rademacher().sample(stream(1), 1000)
    assert set(np.unique(x)) == {-1.0, 1.0}


def test_uniform_support():
    x = NoiseSpec.uniform().sample(stream(2), 10_000)
    assert x.min() >= -math.sqrt(3) and x.max() <= math.sqrt(3)


def test_gaussian_sample_variance():
    x = NoiseSpec.gaussian().sample(stream(3), 1_000_000)
    assert 0.99 <= x.var() <= 1.01


def test_laplace_closed_forms():
    lam = np.linspace(-3, 3, 13)
    assert np.allclose(NoiseSpec.gaussian().laplace(lam), np.exp(lam ** 2 / 2))
    assert np.allclose(NoiseSpec.rademacher().laplace(lam), np.cosh(lam))


def test_uniform_laplace_at_one():
    # sinh(sqrt 3) / sqrt 3 from a 30-digit mpmath evaluation, cross-checked by quadrature
    val = float(NoiseSpec.uniform().laplace(1.0))
    assert val == pytest.approx(1.5805865635666680, abs=1e-13)
    r3 = math.sqrt(3)
    quad = integrate.quad(lambda x: math.exp(x) / (2 * r3), -r3, r3)[0]
    assert val == pytest.approx(quad, rel=1e-12)


@pytest.mark.parametrize("spec", [NoiseSpec.two_point(0.3), NoiseSpec.truncated_exp(1.0)], ids=str)
def test_laplace_matches_quadrature(spec):
    for lam in (-1.5, 0.4, 2.0):
        if spec.is_discrete:
            v, p = spec.atoms()
            ref = float(np.sum(p * np.exp(lam * v)))
        else:
            r = spec.radius
            ref = integrate.quad(lambda x: math.exp(lam * x) * spec.pdf(x), -r, r, limit=200,
                                 points=[0.0])[0]
        assert float(spec.laplace(lam)) == pytest.approx(ref, rel=1e-8)


def test_laplace_overflow_raises():
    with np.errstate(over="ignore"), pytest.raises(OverflowError):
        NoiseSpec.gaussian().laplace(100.0)


def test_tail_beta_values():
    assert tail_beta(1) == pytest.approx(1 / 3)
    assert tail_beta(2) == pytest.approx(0.5)
    assert abs(tail_beta(1e6) - 1) < 1e-5


@pytest.mark.parametrize("text,kind", [("gaussian", NoiseKind.GAUSSIAN), ("two_point:0.3", NoiseKind.TWO_POINT),
                                        ("truncated_exp:1", NoiseKind.TRUNCATED_EXP)])
def test_parse_and_json_round_trip(text, kind):
    spec = parse_spec(text)
    assert spec.kind is kind
    assert NoiseSpec.from_json(spec.to_json()) == spec


def test_invalid_two_point():
    with pytest.raises(ValueError):
        NoiseSpec.two_point(1.0)


def test_ks_distance_of_exact_quantiles_is_small():
    spec = NoiseSpec.uniform()
    u = (np.arange(10_000) + 0.5) / 10_000
    x = (2 * u - 1) * math.sqrt(3)
    assert ks_distance(x, spec) < 1e-3


@settings(max_examples=40, deadline=None)
@given(st.floats(0.05, 0.95), st.floats(-3, 3))
def test_two_point_log_laplace_convex_and_centered(p, lam):
    spec = NoiseSpec.two_point(p)
    h = 1e-3
    f = lambda x: float(spec.log_laplace(x))
    assert f(lam + h) + f(lam - h) - 2 * f(lam) >= -1e-12
    assert f(0.0) == pytest.approx(0.0, abs=1e-14)
    # zero mean and unit variance: log M(l) ~ l^2 / 2 near 0
    assert (f(h) + f(-h)) / (h * h) == pytest.approx(1.0, rel=1e-3)


@settings(max_examples=25, deadline=None)
@given(st.sampled_from(ALL), st.integers(0, 2 ** 32))
def test_sample_within_support(spec, seed):
    x = spec.sample(stream(seed), 200)
    assert np.all(np.abs(x) <= spec.radius + 1e-12)
