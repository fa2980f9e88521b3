"""Symmetric matrices: square roots, pseudo-inverses, norms and the
perturbation and concentration inequalities used by the coupling."""
import math

import numpy as np

PSD_TOL = 1e-9


class NotPSDError(ValueError):
    """A matrix required to be positive semi-definite is not."""


def symmetrize(a):
    """Symmetric copy with the upper triangle authoritative."""
    a = np.array(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("expected a square matrix")
    up = np.triu(a)
    return up + np.triu(a, 1).T


def eigh_sym(a):
    a = np.asarray(a, dtype=float)
    return np.linalg.eigh(0.5 * (a + np.swapaxes(a, -1, -2)))


def _clamp(w, scale, tol, what="matrix"):
    lo = w.min(axis=-1)
    bad = lo < -tol * np.maximum(1.0, scale)
    if np.any(bad):
        raise NotPSDError(f"{what} is not PSD: eigenvalue {float(np.min(lo)):.3e}")
    return np.maximum(w, 0.0)


def sym_sqrt(p, tol=PSD_TOL, rel_floor=0.0):
    """PSD square root by eigendecomposition; works on stacks of matrices.

    Eigenvalues below rel_floor times the largest are treated as zero.
    """
    w, v = eigh_sym(p)
    scale = np.abs(w).max(axis=-1, keepdims=True) if w.size else 1.0
    w = _clamp(w, scale, tol)
    if rel_floor > 0:
        w = np.where(w > rel_floor * scale, w, 0.0)
    return (v * np.sqrt(w)[..., None, :]) @ np.swapaxes(v, -1, -2)


def pseudo_inverse(p, rank_tol=1e-10):
    """Moore-Penrose inverse of a symmetric matrix."""
    w, v = eigh_sym(p)
    if w.size == 0:
        return np.zeros_like(p, dtype=float)
    cut = rank_tol * np.abs(w).max(axis=-1, keepdims=True)
    keep = np.abs(w) > cut
    inv = np.where(keep, 1.0 / np.where(keep, w, 1.0), 0.0)
    return (v * inv[..., None, :]) @ np.swapaxes(v, -1, -2)


def op_norm(a):
    """Largest |eigenvalue| of a symmetric matrix (or of each in a stack)."""
    a = np.asarray(a, dtype=float)
    if a.shape[-1] == 0:
        return 0.0
    w = np.linalg.eigvalsh(0.5 * (a + np.swapaxes(a, -1, -2)))
    out = np.abs(w).max(axis=-1)
    return float(out) if out.ndim == 0 else out


def power_norm(a, rng=None, iters=5000, tol=1e-13):
    """Operator norm of a symmetric matrix by power iteration on A^2."""
    a = np.asarray(a, dtype=float)
    rng = np.random.default_rng(0) if rng is None else rng
    x = rng.standard_normal(a.shape[0])
    x /= np.linalg.norm(x)
    lam = 0.0
    for _ in range(iters):
        y = a @ (a @ x)
        ny = np.linalg.norm(y)
        if ny == 0.0:
            return 0.0
        x = y / ny
        if abs(ny - lam) <= tol * ny:
            lam = ny
            break
        lam = ny
    return math.sqrt(lam)


def is_psd(a, tol=PSD_TOL):
    w = np.linalg.eigvalsh(0.5 * (a + a.T))
    return bool(w.min() >= -tol * max(1.0, np.abs(w).max()))


def _require_psd(a, what):
    if not is_psd(a):
        lo = float(np.linalg.eigvalsh(0.5 * (a + a.T)).min())
        raise NotPSDError(f"{what} is not PSD: eigenvalue {lo:.3e}")


def sqrt_gap_ratio(p, q):
    """||sqrt(P+Q) - sqrt(P)|| / sqrt(||Q||), with 0 for Q = 0."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValueError("shape mismatch")
    _require_psd(p, "P")
    _require_psd(p + q, "P+Q")
    nq = op_norm(q)
    if nq == 0.0:
        return 0.0
    return op_norm(sym_sqrt(p + q) - sym_sqrt(p)) / math.sqrt(nq)


def sqrt_monotone_check(p, q, tol=1e-8):
    """For 0 <= P <= Q: whether sqrt(Q) - sqrt(P) is PSD up to tol."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    _require_psd(p, "P")
    _require_psd(q - p, "Q-P")
    d = sym_sqrt(q) - sym_sqrt(p)
    return bool(np.linalg.eigvalsh(0.5 * (d + d.T)).min() >= -tol)


def bernstein_xm(a, b, c, C, m):
    """Level beyond which a tail C exp(-c x^2 / (a + b x)) is below e^{-m}."""
    if min(a, b, c, C) <= 0 or m <= 0:
        raise ValueError("a, b, c, C and m must be positive")
    L = math.log(C)
    if L < 1:
        raise ValueError("requires log C >= 1")
    x1 = math.sqrt(2 * a / c) * (math.sqrt(L) + m)
    x2 = (2 * b / c) * (L + m)
    return max(x1, x2)


def matrix_bernstein_bound(sigma2, R, d, x):
    """2d exp(-(3/2) x^2 / (3 sigma^2 + R x))."""
    x = np.asarray(x, dtype=float)
    out = 2 * d * np.exp(-1.5 * x * x / (3 * sigma2 + R * x))
    return float(out) if out.ndim == 0 else out


# random instances

def random_psd(rng, d, rank=None):
    a = rng.standard_normal((d, d if rank is None else rank))
    return a @ a.T


def random_gap_pair(rng, d):
    """(P, Q) with P and P+Q PSD, drawn from a mix of constructions."""
    kind = rng.integers(4)
    p = random_psd(rng, d)
    if kind == 0:  # independent endpoints
        return p, random_psd(rng, d) - p
    if kind == 1:  # small perturbation inside the cone
        r = random_psd(rng, d)
        return p, 10.0 ** rng.uniform(-4, 0) * r
    if kind == 2:  # rank-deficient P
        p = random_psd(rng, d, rank=max(1, d // 2))
        return p, random_psd(rng, d) - p
    n = rng.standard_normal((d, d))
    n = n + n.T
    return np.zeros((d, d)), n @ n.T


def random_strong_pair(rng, d):
    """(P, Q) with lambda_min(P) >= ||Q||."""
    q = rng.standard_normal((d, d))
    q = (q + q.T) * 10.0 ** rng.uniform(-3, 1)
    nq = op_norm(q)
    p = random_psd(rng, d) + nq * (1.0 + rng.exponential()) * np.eye(d)
    return p, q


def sqrt_gap_campaign(rng, instances, dims=(2, 50)):
    """Randomized search for the square-root gap constant."""
    lo, hi = dims
    worst = 0.0
    worst_strong = 0.0
    violations = 0
    strong_violations = 0
    above_one = 0
    n_strong = 0
    for i in range(instances):
        d = int(rng.integers(lo, hi + 1))
        if i % 2:
            p, q = random_strong_pair(rng, d)
            r = sqrt_gap_ratio(p, q)
            n_strong += 1
            worst_strong = max(worst_strong, r)
            strong_violations += r > 1.0
        else:
            p, q = random_gap_pair(rng, d)
            r = sqrt_gap_ratio(p, q)
        worst = max(worst, r)
        violations += r > 3.0
        above_one += r > 1.0
    return {
        "instances": instances,
        "max_ratio": worst,
        "violations": int(violations),
        "strong_instances": n_strong,
        "max_ratio_strong": worst_strong,
        "strong_violations": int(strong_violations),
        "ratio_above_one": int(above_one),
    }


def monotone_campaign(rng, instances, dims=(2, 50)):
    lo, hi = dims
    violations = 0
    worst = math.inf
    for _ in range(instances):
        d = int(rng.integers(lo, hi + 1))
        p = random_psd(rng, d)
        b = rng.standard_normal((d, d))
        q = p + b @ b.T
        diff = sym_sqrt(q) - sym_sqrt(p)
        m = float(np.linalg.eigvalsh(0.5 * (diff + diff.T)).min())
        worst = min(worst, m)
        violations += m < -1e-8
    return {"instances": instances, "min_eigenvalue": worst, "violations": int(violations)}


def bernstein_parameters(vectors, p):
    """(sigma^2, R) for sum_i (1/n) v_i v_i^T (b_i - p), b_i ~ Bernoulli(p)."""
    v = np.asarray(vectors, dtype=float)
    n = v.shape[1]
    sq = (v * v).sum(axis=0)
    sigma2 = op_norm((v * sq) @ v.T) * p * (1 - p) / n ** 2
    R = float(sq.max()) * max(p, 1 - p) / n
    return sigma2, R


def bernstein_grid(sigma2, R, d, points=10, lowest=1e-4):
    """x values where the bound runs from 1 down to `lowest`."""
    def level(target):
        L = math.log(2 * d / target)
        # 1.5 x^2 = L (3 sigma^2 + R x)
        return (L * R + math.sqrt((L * R) ** 2 + 18 * L * sigma2)) / 3
    return np.linspace(level(1.0), level(lowest), points)


def bernstein_empirics(vectors, p, x_grid, trials, rng, batch=500):
    """Tail frequencies of ||sum_i (1/n) v_i v_i^T (b_i - p)|| with b_i ~ Bernoulli(p).

    Returns (frequencies, bounds, sigma2, R).
    """
    v = np.asarray(vectors, dtype=float)
    d, n = v.shape
    sigma2, R = bernstein_parameters(v, p)
    x_grid = np.asarray(x_grid, dtype=float)
    hits = np.zeros(x_grid.size)
    done = 0
    while done < trials:
        m = min(batch, trials - done)
        b = (rng.random((m, n)) < p).astype(float) - p
        a = np.einsum("ti,ji,ki->tjk", b, v, v, optimize=True) / n
        norms = op_norm(a)
        hits += (norms[:, None] >= x_grid).sum(axis=0)
        done += m
    freq = hits / trials
    bounds = matrix_bernstein_bound(sigma2, R, d, x_grid)
    return freq, np.atleast_1d(bounds), sigma2, R
