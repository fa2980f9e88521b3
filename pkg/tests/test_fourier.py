import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chaoslab import fourier as F
from chaoslab.noise import NoiseSpec
from chaoslab.rng import stream

RAD = NoiseSpec.rademacher()
GAU = NoiseSpec.gaussian()


def test_series_at_zero_and_zero_draw():
    d = F.draw_coefficients(RAD, 50, 1)
    k = np.arange(1, 51)
    assert F.series_eval(d, np.array([0.0]))[0] == pytest.approx(np.sum(d.a1 / np.sqrt(k)))
    z = F.FourierDraw(50, np.zeros(50), np.zeros(50), RAD)
    assert np.all(F.series_eval(z, np.linspace(0, 1, 7)) == 0)
    assert d.coeffs.size == 100


def test_fft_and_direct_paths_agree():
    d = F.draw_coefficients(GAU, 300, 2)
    t = np.arange(2048) / 2048
    assert np.abs(F.series_eval(d, t, "fft") - F.series_eval(d, t, "direct")).max() < 1e-10
    with pytest.raises(ValueError):
        F.series_eval(d, np.arange(512) / 512, "fft")


def test_gaussian_series_variance():
    k = np.arange(1, 5)
    c = np.cos(2 * np.pi * k * 0.3) / np.sqrt(k)
    s = np.sin(2 * np.pi * k * 0.3) / np.sqrt(k)
    a = GAU.sample(stream(3), (2, 100_000, 4))
    x = a[0] @ c + a[1] @ s
    target = 25 / 12
    se = target * math.sqrt(2 / x.size)
    assert abs(x.var() - target) < 3 * se


def test_prefix_nesting():
    big = F.draw_coefficients(RAD, 1024, 4)
    small = F.draw_coefficients(RAD, 256, 4)
    assert np.array_equal(big.a1[:256], small.a1)
    t = np.arange(4096) / 4096
    m_big = F.prelimit_gmc(big.truncate(256), 1.0, t)
    m_small = F.prelimit_gmc(small, 1.0, t)
    assert np.array_equal(m_big.density, m_small.density)


def test_normalizer_examples():
    assert F.normalizer(RAD, 10, 0.0, 0.3) == 1.0
    g = F.log_normalizer(GAU, 20, 0.7, np.array([0.1, 0.4]))
    assert np.allclose(g, 0.49 / 2 * np.sum(1 / np.arange(1, 21)))
    assert np.allclose(F.log_normalizer(GAU, 20, 0.7, np.array([0.1]), F.NormalizerMode.GAUSSIAN), g[0])
    # sin terms vanish at t = 0
    z = F.normalizer(RAD, 2, 1.0, 0.0)
    assert z == pytest.approx(math.cosh(1) * math.cosh(1 / math.sqrt(2)), rel=1e-14)
    assert z == pytest.approx(1.9451948513422882, abs=1e-13)


def test_exact_normalizer_against_monte_carlo():
    z = F.normalizer(RAD, 20, 1.0, 0.17)
    m, se = F.normalizer_mc(RAD, 20, 1.0, 0.17, 200_000, stream(5))
    assert abs(m - z) < 4 * se


def test_truncated_law_normalizer_spline():
    sp = NoiseSpec.truncated_exp(1.0)
    z = F.log_normalizer(sp, 30, 0.8, np.array([0.21]))[0]
    k = np.arange(1, 31)
    ref = float(np.sum(sp.log_laplace(0.8 * np.cos(2 * np.pi * k * 0.21) / np.sqrt(k))
                       + sp.log_laplace(0.8 * np.sin(2 * np.pi * k * 0.21) / np.sqrt(k))))
    assert z == pytest.approx(ref, abs=1e-9)


def test_flat_measure_at_gamma_zero():
    d = F.draw_coefficients(RAD, 64, 6)
    m = F.prelimit_gmc(d, 0.0, np.arange(256) / 256)
    assert np.all(m.density == 1.0) and m.mass() == 1.0


def test_grid_too_coarse():
    with pytest.raises(ValueError):
        F.prelimit_gmc(F.draw_coefficients(RAD, 64, 6), 1.0, np.arange(100) / 100)


def test_mean_mass_small():
    m = F.total_masses(RAD, 256, 0.5, 1000, 7)
    assert abs(m.mean() - 1) < 0.05


def test_nonuniform_grid_mass():
    d = F.draw_coefficients(GAU, 16, 8)
    t = np.sort(stream(8).random(400))
    m = F.prelimit_gmc(d, 0.5, t, F.NormalizerMode.GAUSSIAN)
    ref = F.prelimit_gmc(d, 0.5, np.arange(4096) / 4096).mass()
    assert m.mass() == pytest.approx(ref, rel=0.02)


def test_participation_ratio_decreases_in_gamma():
    t = np.arange(4096) / 4096
    pr = np.zeros((50, 3))
    for i in range(50):
        d = F.draw_coefficients(GAU, 1024, 100 + i)
        pr[i] = [F.prelimit_gmc(d, g, t).participation_ratio() for g in (0.5, 1.0, 1.5)]
    med = np.median(pr, axis=0)
    assert med[0] > med[1] > med[2]


def test_figure_data_cells():
    grid, cells = F.figure_data([0.0, 1.0], [64, 256], GAU, 9, 1024)
    assert len(cells) == 4
    assert np.all(cells[(0.0, 64)].density == 1.0)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 200), st.integers(0, 2 ** 32), st.floats(0.0, 1.4))
def test_density_nonnegative_and_periodic_mass(n, seed, gamma):
    d = F.draw_coefficients(RAD, n, seed)
    N = 1 << max(2, (4 * n - 1).bit_length())
    m = F.prelimit_gmc(d, gamma, np.arange(N) / N)
    assert np.all(m.density >= 0)
    assert 0 < m.mass() < math.inf
    assert 0 < m.top_fraction(0.01) <= 1
