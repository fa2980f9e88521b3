"""Acceptance criteria at their stated sizes and tolerances.

Each test records one line (shown in the terminal summary) and then asserts.
The runtime budget is part of each criterion.
"""
import math
import time

import numpy as np
import pytest

from chaoslab import experiments as E
from chaoslab import psd
from chaoslab.rng import stream

pytestmark = pytest.mark.acceptance


def _timed(fn, *a, **kw):
    t0 = time.perf_counter()
    out = fn(*a, **kw)
    return out, time.perf_counter() - t0


def test_01_sqrt_gap(record):
    r, secs = _timed(psd.sqrt_gap_campaign, stream(0, "acc1"), 10_000, (2, 50))
    ok = r["violations"] == 0 and r["strong_violations"] == 0 and secs < 60
    record("1-sqrt-gap", ok, f"max ratio {r['max_ratio']:.3f} (<= 3), strong-case max "
           f"{r['max_ratio_strong']:.3f} (<= 1) over {r['strong_instances']}", secs)
    assert ok


def test_02_monotone_sqrt(record):
    r, secs = _timed(psd.monotone_campaign, stream(0, "acc2"), 10_000, (2, 50))
    ok = r["violations"] == 0 and secs < 60
    record("2-monotone-sqrt", ok, f"min eig {r['min_eigenvalue']:.2e} (>= -1e-8)", secs)
    assert ok


def test_03_embedding(record):
    t0 = time.perf_counter()
    reps = [E.embed_report(s, 100_000, seed=0) for s in E.DEFAULT_SPECS]
    secs = time.perf_counter() - t0
    ok = all(r["pass"] for r in reps) and secs < 120
    worst_ks = max(r["ks"] for r in reps)
    worst_z = max(abs(r["z"]) for r in reps)
    record("3-embedding", ok, f"{len(reps)} laws, max KS {worst_ks:.4f} (< 0.01), "
           f"max |z| {worst_z:.2f} (< 3)", secs)
    assert ok


def test_04_coupling_marginals(record):
    r, secs = _timed(E.coupling_marginals, 256, 8, 10_000, seed=0)
    ok = r["pass"] and secs < 600
    record("4-coupling-marginals", ok, f"cov Frobenius {r['cov_rel_frobenius']:.4f} (<= 0.05), "
           f"max KS {r['ks_max']:.4f} (< 0.02)", secs)
    assert ok


def test_05_pathwise(record):
    r, secs = _timed(E.pathwise_check, runs=100, seed=0)
    ok = r["pass"] and secs < 300
    record("5-pathwise", ok, f"QV err {r['qv_max_abs_err']:.1e} (<= 1e-8), worst "
           f"||G-Gam||/(3 sqrt||A||) {r['worst_gap_ratio']:.3f} (<= 1)", secs)
    assert ok


def test_06_bernstein(record):
    r, secs = _timed(E.bernstein_check, 2000, 10, 10_000, 1.0, 0)
    ok = r["pass"] and secs < 300
    margin = float(np.min(np.asarray(r["bound"]) - np.asarray(r["frequency"])))
    record("6-bernstein", ok, f"{len(r['x'])}-point grid, min (bound - freq) {margin:.2e}", secs)
    assert ok


def test_07_scaling(record):
    r, secs = _timed(E.scaling, 16, range(8, 15), 200, (16, 32, 64), seed=0)
    ok = r["pass"] and secs < 1800
    med = " ".join(f"{x['median_gap']:.3f}" for x in r["rows"])
    record("7-scaling", ok, f"slope {r['slope_d_over_n']:.3f} in [0.2, 0.55], decreasing "
           f"{r['decreasing']}, d=n slope {r['hartley_slope_n']:.3f} (>= -0.05); medians {med}", secs)
    assert ok


def test_08_vnorm(record):
    r, secs = _timed(E.vnorm_campaign, range(8, 13), (0.6, 1.0), 10, seed=0)
    ok = r["pass"] and secs < 600
    record("8-vnorm", ok, f"{len(r['rows'])} sets, <= 10 n^4 {r['within_bound']}, "
           f"||V||/|K| max {r['ratio_max']:.3f} median {r['ratio_median']:.3f}, layer dev "
           f"{r['layer_max_dev']:.1e}", secs)
    assert ok


def test_09_thick_counts(record):
    out, secs = _timed(E.thick_counts, 12, (0.6, 1.0, 1.3), 100, seed=0)
    ok = all(o["pass"] for o in out) and secs < 900
    det = "; ".join(f"x={o['x']}: {o['median']:.3f} vs {o['target']:.3f}" for o in out)
    record("9-thick-counts", ok, det + " (+-0.15)", secs)
    assert ok


def test_10_hierarchical_decay(record):
    r, secs = _timed(E.coupling_decay, 12, 0.6, 50, seed=0)
    ok = r["pass"] and secs < 1800
    record("10-hier-decay", ok, f"slope {r['slope']:.4f} (<= {r['target']:.3f}), "
           f"level-12 median gap {r['median_gap'][-1]:.3f}", secs)
    assert ok


def test_11_gmc(record):
    t0 = time.perf_counter()
    mass = E.gmc_masses("rademacher", 1 << 10, (0.5, 1.0, 1.5), 10_000, seed=0)
    loc = E.localization(1.9, 1 << 16, 1 << 18, 20, seed=0)
    secs = time.perf_counter() - t0
    ok = all(m["pass"] for m in mass) and loc["pass"] and secs < 600
    det = ", ".join(f"g={m['gamma']}: {m['mean']:.3f}+-{m['stderr']:.3f}" for m in mass)
    record("11-gmc", ok, f"mean mass {det}; top-1% median {loc['median']:.4f} (>= 0.99)", secs)
    assert ok


def test_12_block_variance(record):
    rows, secs = _timed(E.block_variance_exact, range(2, 15))
    ok = all(r["pass"] for r in rows) and secs < 1
    worst = max(r["gap"] / r["bound"] for r in rows)
    record("12-block-variance", ok, f"max gap/bound {worst:.3f} (<= 1), levels 2..14", secs)
    assert ok
