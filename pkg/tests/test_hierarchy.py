import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chaoslab import fourier as F
from chaoslab import hierarchy as H
from chaoslab.noise import NoiseSpec
from chaoslab.rng import stream

RAD = NoiseSpec.rademacher()
GAU = NoiseSpec.gaussian()


def test_depth_one_and_two():
    t = H.build_tree(2)
    assert list(t.mesh(1)) == [0.0, 0.5, 1.0]
    assert t.size(1) == 2
    assert len(t.mesh(2)) == 65


def test_depth_two_by_enumeration():
    pts = {Fraction(q, 64) for q in range(65)} | {Fraction(0), Fraction(1, 2), Fraction(1)}
    t = H.build_tree(2)
    got = [t.exact_point(2, i) for i in range(t.size(2))] + [Fraction(1)]
    assert got == sorted(pts)


def test_tree_budget_error_has_estimate():
    with pytest.raises(H.TreeSizeError, match="nodes"):
        H.build_tree(12, 4)
    with pytest.raises(ValueError):
        H.build_tree(0)


def test_points_belong_to_some_partition():
    t = H.build_tree(4)
    for lev in range(1, 5):
        for i in range(0, t.size(lev), 37):
            x = t.exact_point(lev, i)
            assert any((x * t.D(j)).denominator == 1 for j in range(lev + 1))


def test_refinement_and_node_counts():
    t = H.build_tree(4)
    for lev in range(1, 5):
        lo, hi = t.intervals(lev)
        plo, phi = t.intervals(lev - 1)
        par = t.parent(lev)
        assert np.all(plo[par] <= lo) and np.all(hi <= phi[par])
        assert t.size(lev) <= sum(2 ** i * t.f(i) for i in range(lev + 1))
        assert t.size(lev) <= 2 ** (lev + 1) * t.f(lev)


def test_level_one_block_is_one_term():
    t = H.build_tree(3, 0)
    c = np.array([[0.7], [-1.2]])
    x = H.block_values(t, 1, c)
    tt = t.t(1)
    assert np.allclose(x, 0.7 * np.cos(2 * np.pi * tt) - 1.2 * np.sin(2 * np.pi * tt))


def test_block_variance_level_three():
    assert H.block_variance(3) == pytest.approx(0.7595238095238095, abs=1e-15)
    assert H.block_variance(3) - math.log(2) == pytest.approx(0.066376, abs=1e-6)


def test_partial_sum_matches_series_at_ancestors():
    t = H.build_tree(3)
    vals = H.independent_fields(t, RAD, 5)
    d = F.draw_coefficients(RAD, 7, 5)
    for i in (0, 17, t.size(3) - 1):
        tot = 0.0
        for lev in (1, 2, 3):
            anc = t.ancestor(3, i, lev)
            k = np.arange(2 ** (lev - 1), 2 ** lev)
            tt = t.t(lev)[anc]
            tot += np.sum((d.a1[k - 1] * np.cos(2 * np.pi * k * tt)
                           + d.a2[k - 1] * np.sin(2 * np.pi * k * tt)) / np.sqrt(k))
        assert vals[2].S_a[i] == pytest.approx(tot, abs=1e-12)


def test_telescoping_exact():
    t = H.build_tree(6, 0)
    vals = H.independent_fields(t, RAD, 3)
    for lev in range(2, 7):
        b, prev = vals[lev - 1], vals[lev - 2]
        assert np.array_equal(b.S_a, prev.S_a[t.parent(lev)] + b.X_a)


def test_fft_and_direct_block_values():
    t = H.build_tree(5)
    c = RAD.sample(stream(2), (2, 16))
    assert np.abs(H.block_values(t, 5, c, "fft") - H.block_values(t, 5, c, "direct")).max() < 1e-11


def test_thresholds():
    b = H.BlockValues(3, np.zeros(4), np.zeros(4), np.array([0.0, 2.0, 2.1, 3.0]), np.zeros(4))
    ts = H.thick_points(b, 1.1, 0.1)
    assert ts.threshold == pytest.approx(3 * math.log(2))
    assert list(ts.members) == [2, 3]
    near = H.thick_points(b, 1.0, 1.0 - 1e-15)
    assert near.threshold == pytest.approx(0.0, abs=1e-13)
    assert list(near.members) == [1, 2, 3]
    with pytest.raises(ValueError):
        H.thick_points(b, 1.0, 1.5)


def test_gaussian_thick_count_scale():
    t = H.build_tree(10, 0)
    sizes = []
    for s in range(100):
        v = H.independent_fields(t, GAU, s, 9)
        b = H.BlockValues(9, None, None, v[-1].S_g, v[-1].S_g)
        T = H.thick_points(b, 1.1, 0.1, "a")
        sizes.append(H.children_of(t, 10, T.members).size)
    m = np.mean(sizes)
    assert 32 / 10 ** 3 <= m <= 32 * 10 ** 3


def test_dft_vector_system_properties():
    t = H.build_tree(6, 0)
    K = np.arange(0, t.size(6), 3)
    s = H.dft_vector_system(t, K, 6)
    assert s.n == 64 and s.d == K.size
    assert np.abs(s.vectors).max() <= 1 + 1e-12
    # first frequency carries scale 1
    k0 = 32
    assert np.allclose(s.vectors[:, 0], np.cos(2 * np.pi * k0 * t.t(6)[K]))
    rep = H.spectral_norm_V(t, K, 6)
    assert rep.norm_U <= rep.norm_V + 1e-12
    with pytest.raises(ValueError):
        H.dft_vector_system(t, np.arange(t.size(6)), 5) if t.size(6) > 32 else None


def test_single_node_U_and_V():
    t = H.build_tree(5, 0)
    s = H.dft_vector_system(t, [3], 5)
    k = np.arange(16, 32)
    assert s.U[0, 0] == pytest.approx(np.sum(16 / k) / 32)
    assert 0.25 < s.U[0, 0] <= 0.5
    assert H.spectral_norm_V(t, [3], 5).norm_V == pytest.approx(1.0)


def test_layer_orthogonality_exact():
    t = H.build_tree(5)
    K = np.arange(0, t.size(5), 5)
    r = H.layer_orthogonality(t, K, 5)
    assert r["max_dev"] <= 1e-8 and r["groups"] > 0


def test_one_layer_gram_is_identity():
    # dyadic points of one layer below the block level: Gram = 2^(n-1) I
    t = H.build_tree(6, 0)
    lv = t.nodes(6)
    K = np.flatnonzero(lv.first == 4)
    V = H.v_matrix(t, K, 6)
    assert np.allclose(V, np.eye(K.size), atol=1e-12)


def test_vnorm_much_smaller_than_trivial():
    t = H.build_tree(10, 0)
    v = H.independent_fields(t, RAD, 1, 9)
    K = H.thick_children(t, 10, v[-1], 1.1, 0.1)
    rep = H.spectral_norm_V(t, K, 10)
    assert rep.size >= 16
    assert rep.norm_V <= 0.25 * rep.trivial


def test_hierarchical_coupling_report():
    run = H.hierarchical_coupling(6, 0.8, 0.08, RAD, seed=1)
    assert len(run.reports) == 6
    for r, bv, K in zip(run.reports, run.values, run.K):
        if K.size:
            assert r.sup_gap == pytest.approx(np.abs(bv.X_a[K] - bv.X_g[K]).max())
    # the a-coefficients come from the embedding and so stay Rademacher
    assert run.reports[0].size_K == 2


def test_near_critical_thick_sets_are_small():
    run = H.hierarchical_coupling(8, 1.41, 0.01, RAD, seed=2)
    assert max(r.size_K for r in run.reports[3:]) <= 8 ** 3


def test_rn_ratio_trivial_cases():
    t = H.build_tree(5, 0)
    v = H.independent_fields(t, GAU, 3)
    same = [H.BlockValues(b.level, b.X_a, b.X_a, b.S_a, b.S_a) for b in v]
    for lr in H.rn_ratio(t, 0.9, same, GAU):
        assert np.allclose(lr, 0.0)
    for lr in H.rn_ratio(t, 0.0, v, RAD):
        assert np.all(lr == 0.0)


def test_laplace_check_cases():
    g = H.laplace_check(GAU, 0.8, [4, 5, 6, 7], draws=10_000, seed=1)
    assert all(abs(r["diff_exact"]) < 1e-12 for r in g["rows"])
    r = H.laplace_check(RAD, 0.8, [4, 5, 6, 7, 8], draws=10_000, seed=2)
    assert r["pass"]
    for row in r["rows"]:
        assert abs(row["var"] - row["level"] * math.log(2)) < 1.0


@settings(max_examples=10, deadline=None)
@given(st.floats(0.2, 1.3), st.floats(0.01, 0.3), st.floats(0.01, 0.3), st.integers(0, 1000))
def test_thick_sets_grow_with_delta(gamma, d1, d2, seed):
    lo, hi = sorted((d1, d2))
    if hi >= gamma:
        return
    t = H.build_tree(6, 0)
    v = H.independent_fields(t, RAD, seed)[-1]
    a = set(H.thick_points(v, gamma, lo).members)
    b = set(H.thick_points(v, gamma, hi).members)
    assert a <= b


@settings(max_examples=10, deadline=None)
@given(st.integers(1, 4), st.integers(0, 3))
def test_tree_invariants_any_power(depth, power):
    t = H.build_tree(depth, power)
    for lev in range(1, depth + 1):
        assert np.all(np.diff(t.t(lev)) > 0)
        par = t.parent(lev)
        assert np.all(np.diff(par) >= 0)
        assert np.all(t.t(lev - 1)[par] <= t.t(lev))
