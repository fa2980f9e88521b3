"""Hierarchical (near-dyadic) approximation of the random Fourier field:
interval tree, block sums, thick points, DFT vector systems on thick sets,
the level-by-level coupling and the Radon-Nikodym ratio process."""
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import kernels
from .coupling import DEFAULT_DT as _COUPLING_DT
from .coupling import NormMode, VectorSystem, run_coupling, theoretical_gap_bound
from .fourier import block_coefficients, block_range
from .noise import NoiseKind, NoiseSpec
from .psd import op_norm, pseudo_inverse
from .rng import stream

LN2 = math.log(2.0)
MAX_DEPTH = 14
MAX_NODES = 1 << 24
DEFAULT_MESH_POWER = 4
HIER_DT = 0.01


class TreeSizeError(MemoryError):
    """Requested tree exceeds the node budget."""


def mesh_factor(level, power=DEFAULT_MESH_POWER):
    """f(level) = level^power, with f(0) = 1."""
    return 1 if level == 0 else int(level) ** int(power)


def denominator(level, power=DEFAULT_MESH_POWER):
    return (1 << level) * mesh_factor(level, power)


def estimate_nodes(depth, power=DEFAULT_MESH_POWER):
    """Upper bound on stored nodes: sum over levels of sum_{i<=l} 2^i f(i)."""
    total = 1
    run = 1
    for lev in range(1, depth + 1):
        run += denominator(lev, power)
        total += run
    return total


@dataclass(eq=False)
class Level:
    """Nodes of one level, sorted by left endpoint.

    Each left endpoint is stored exactly as num / D(first), where `first` is
    the first level whose partition contains it.
    """

    level: int
    num: np.ndarray
    first: np.ndarray
    t: np.ndarray
    parent: np.ndarray

    @property
    def size(self):
        return self.t.size


@dataclass(eq=False)
class HierTree:
    depth: int
    mesh_power: int
    levels: list

    def f(self, level):
        return mesh_factor(level, self.mesh_power)

    def D(self, level):
        return denominator(level, self.mesh_power)

    def nodes(self, level):
        return self.levels[level]

    def t(self, level):
        return self.levels[level].t

    def parent(self, level):
        return self.levels[level].parent

    def size(self, level):
        return self.levels[level].size

    def mesh(self, level):
        """Sorted S_level as floats (left endpoints plus 1)."""
        return np.append(self.levels[level].t, 1.0)

    def intervals(self, level):
        t = self.levels[level].t
        return t, np.append(t[1:], 1.0)

    def exact_point(self, level, i):
        lv = self.levels[level]
        return Fraction(int(lv.num[i]), self.D(int(lv.first[i])))

    def ancestor(self, level, i, up_to):
        """Index of the level-`up_to` ancestor of node i at `level`."""
        for lev in range(level, up_to, -1):
            i = int(self.levels[lev].parent[i])
        return i

    def ancestor_map(self, level, up_to):
        idx = np.arange(self.size(level))
        for lev in range(level, up_to, -1):
            idx = self.levels[lev].parent[idx]
        return idx

    def branching(self, level):
        """Children per node at `level` (for level < depth)."""
        return np.bincount(self.levels[level + 1].parent, minlength=self.size(level))


def _strictly_increasing(num, den):
    a = num[:-1] * den[1:]
    b = num[1:] * den[:-1]
    return bool(np.all(a < b))


def build_tree(depth, mesh_power=DEFAULT_MESH_POWER, max_nodes=MAX_NODES, max_depth=MAX_DEPTH):
    """Tree of the meshes S_l = S_{l-1} u P_l, P_l = {q / (2^l f(l))}."""
    if depth < 1:
        raise ValueError("depth must be >= 1")
    if depth > max_depth:
        raise TreeSizeError(f"depth {depth} exceeds the cap {max_depth}")
    est = estimate_nodes(depth, mesh_power)
    if est > max_nodes:
        raise TreeSizeError(
            f"depth {depth} with f(l)=l^{mesh_power} needs about {est:,} nodes "
            f"(~{est * 25 / 2**20:,.0f} MiB); budget is {max_nodes:,}")
    dens = [denominator(j, mesh_power) for j in range(depth + 1)]
    root = Level(0, np.zeros(1, np.int64), np.zeros(1, np.int8), np.zeros(1), np.zeros(1, np.int64))
    levels = [root]
    for lev in range(1, depth + 1):
        D = dens[lev]
        q = np.arange(D, dtype=np.int64)  # q = D is the point 1, never a left endpoint
        new = np.ones(D, dtype=bool)
        for j in range(lev):
            new &= (q * dens[j]) % D != 0
        q = q[new]
        prev = levels[-1]
        num = np.concatenate([prev.num, q])
        first = np.concatenate([prev.first, np.full(q.size, lev, np.int8)])
        den = np.asarray(dens, dtype=np.int64)[first]
        t = num / den
        order = np.argsort(t, kind="stable")
        num, first, t, den = num[order], first[order], t[order], den[order]
        if not _strictly_increasing(num, den):
            keys = sorted(range(num.size), key=lambda i: Fraction(int(num[i]), int(den[i])))
            order = np.asarray(keys)
            num, first, t = num[order], first[order], t[order]
        parent = np.searchsorted(prev.t, t, side="right") - 1
        levels.append(Level(lev, num, first, t, parent.astype(np.int64)))
    return HierTree(depth, mesh_power, levels)


# block sums


def block_values(tree, level, coeffs, method="auto"):
    """X(v) = sum over the level's block of (a1 cos 2 pi k t + a2 sin 2 pi k t) / sqrt(k)."""
    a1, a2 = np.asarray(coeffs, dtype=float)
    k0, k1 = block_range(level)
    if a1.size != k1 - k0:
        raise ValueError(f"level {level} needs {k1 - k0} coefficients of each kind")
    lv = tree.nodes(level)
    out = np.empty(lv.size)
    k = np.arange(k0, k1)
    c = (a1 - 1j * a2) / np.sqrt(k)
    for j in np.unique(lv.first):
        sel = np.flatnonzero(lv.first == j)
        D = tree.D(int(j))
        fft_cost = 5 * D * max(1, int(D).bit_length())
        direct_cost = sel.size * k.size * 4
        if method == "fft" or (method == "auto" and fft_cost < direct_cost):
            buf = np.zeros(D, dtype=complex)
            np.add.at(buf, k % D, c)
            out[sel] = (np.fft.ifft(buf) * D).real[lv.num[sel]]
        else:
            out[sel] = kernels.series_direct(lv.t[sel], a1, a2, k0)
    return out


def _phase_table(tree, level, idx, k):
    """(k t(v)) mod 1 computed exactly from the stored rationals."""
    lv = tree.nodes(level)
    num = lv.num[idx]
    den = np.asarray([tree.D(j) for j in range(tree.depth + 1)], dtype=np.int64)[lv.first[idx]]
    return ((np.outer(num, k) % den[:, None]) / den[:, None])


def block_log_laplace(tree, level, spec, gamma, idx=None, chunk=1 << 21):
    """log E exp(gamma X(v)) per node: sum_k log M(gamma cos / sqrt k) + log M(gamma sin / sqrt k)."""
    lv = tree.nodes(level)
    idx = np.arange(lv.size) if idx is None else np.asarray(idx)
    k0, k1 = block_range(level)
    k = np.arange(k0, k1, dtype=np.int64)
    if spec.kind is NoiseKind.GAUSSIAN:
        return np.full(idx.size, 0.5 * gamma * gamma * float(np.sum(1.0 / k)))
    w = gamma / np.sqrt(k)
    out = np.empty(idx.size)
    step = max(1, chunk // k.size)
    for i0 in range(0, idx.size, step):
        ph = 2 * np.pi * _phase_table(tree, level, idx[i0:i0 + step], k)
        out[i0:i0 + step] = (spec.log_laplace(np.cos(ph) * w) + spec.log_laplace(np.sin(ph) * w)).sum(axis=1)
    return out


def block_variance(level):
    """sum_{k in block} 1/k."""
    k0, k1 = block_range(level)
    return float(np.sum(1.0 / np.arange(k0, k1)))


@dataclass(eq=False)
class BlockValues:
    level: int
    X_a: np.ndarray
    X_g: np.ndarray
    S_a: np.ndarray
    S_g: np.ndarray


def accumulate(tree, level, X, S_prev):
    """S(v) = S(parent) + X(v)."""
    return S_prev[tree.parent(level)] + X


def independent_fields(tree, spec, seed, depth=None):
    """a-field from `spec` and an independent Gaussian g-field, block by block."""
    depth = tree.depth if depth is None else depth
    g_spec = NoiseSpec.gaussian()
    Sa = Sg = np.zeros(1)
    out = []
    for lev in range(1, depth + 1):
        Xa = block_values(tree, lev, block_coefficients(spec, seed, lev, "a"))
        Xg = block_values(tree, lev, block_coefficients(g_spec, seed, lev, "g"))
        Sa = accumulate(tree, lev, Xa, Sa)
        Sg = accumulate(tree, lev, Xg, Sg)
        out.append(BlockValues(lev, Xa, Xg, Sa, Sg))
    return out


# thick points


@dataclass(eq=False)
class ThickSet:
    level: int
    gamma: float
    delta: float
    members: np.ndarray
    source: str

    @property
    def threshold(self):
        return thick_threshold(self.level, self.gamma, self.delta)

    def __len__(self):
        return int(self.members.size)


def thick_threshold(level, gamma, delta):
    return level * (gamma - delta) * LN2


def _check_gd(gamma, delta):
    if not 0 < delta < gamma < math.sqrt(2):
        raise ValueError("need 0 < delta < gamma < sqrt(2)")


def thick_points(values, gamma, delta, source="a"):
    """{v : S(v) >= level (gamma - delta) log 2} for source a, g or union."""
    _check_gd(gamma, delta)
    thr = thick_threshold(values.level, gamma, delta)
    if source == "a":
        mask = values.S_a >= thr
    elif source == "g":
        mask = values.S_g >= thr
    elif source == "union":
        mask = (values.S_a >= thr) | (values.S_g >= thr)
    else:
        raise ValueError(f"unknown source {source!r}")
    return ThickSet(values.level, gamma, delta, np.flatnonzero(mask), source)


def children_of(tree, level, parents):
    """Level-`level` nodes whose parent is in `parents`."""
    mask = np.zeros(tree.size(level - 1), dtype=bool)
    mask[np.asarray(parents, dtype=np.int64)] = True
    return np.flatnonzero(mask[tree.parent(level)])


def thick_children(tree, level, prev_values, gamma, delta):
    """K: children of nodes thick at level-1 for either field."""
    if level == 1:
        # the root carries S = 0 and is thick for any threshold
        return np.arange(tree.size(1))
    T = thick_points(prev_values, gamma, delta, "union")
    return children_of(tree, level, T.members)


# DFT vector systems


def _trig(tree, level, K):
    k0, k1 = block_range(level)
    k = np.arange(k0, k1, dtype=np.int64)
    ph = 2 * np.pi * _phase_table(tree, level, np.asarray(K), k)
    return k, np.cos(ph), np.sin(ph)


def dft_vector_system(tree, K, level):
    """psi_k = sqrt(k-/k) (cos, sin)(2 pi k t(v)) over K; columns interleaved as (psi1_k, psi2_k)."""
    K = np.asarray(K, dtype=np.int64)
    N = 1 << level
    if K.size == 0:
        raise ValueError("empty node set")
    if K.size > N:
        raise ValueError(f"|K| = {K.size} exceeds 2^n = {N}")
    k, c, s = _trig(tree, level, K)
    scale = np.sqrt(k[0] / k)
    v = np.empty((K.size, N))
    v[:, 0::2] = c * scale
    v[:, 1::2] = s * scale
    return VectorSystem(v, NormMode.INF, f"hier_dft(level={level},|K|={K.size})")


def v_matrix(tree, K, level):
    """V = 2^{-(n-1)} sum_k Re(zeta_k zeta_k^dagger) restricted to K (unit diagonal)."""
    _, c, s = _trig(tree, level, K)
    m = c.shape[1]
    return (c @ c.T + s @ s.T) / m


@dataclass
class VNormReport:
    level: int
    size: int
    norm_V: float
    norm_U: float
    trivial: float
    bound: float
    ok: bool


def spectral_norm_V(tree, K, level, c=10.0, exponent=10):
    """||V|| and ||U|| on K, with the trivial bound |K| and the check ||V|| <= c n^exponent."""
    K = np.asarray(K, dtype=np.int64)
    if K.size == 0:
        return VNormReport(level, 0, 0.0, 0.0, 0.0, c * level ** exponent, True)
    k, cs, sn = _trig(tree, level, K)
    m = cs.shape[1]
    w = np.sqrt(k[0] / k)
    F = np.hstack([cs, sn]) / math.sqrt(m)
    Fu = np.hstack([cs * w, sn * w]) / math.sqrt(2 * m)
    if K.size <= F.shape[1]:
        nV, nU = op_norm(F @ F.T), op_norm(Fu @ Fu.T)
    else:
        nV, nU = op_norm(F.T @ F), op_norm(Fu.T @ Fu)
    b = c * level ** exponent
    return VNormReport(level, int(K.size), float(nV), float(nU), float(K.size), float(b), bool(nV <= b))


def layer_labels(tree, level, K):
    """(l, r): first level of t(v) and its residue r = t 2^l f(l) mod f(l)."""
    lv = tree.nodes(level)
    K = np.asarray(K, dtype=np.int64)
    first = lv.first[K].astype(np.int64)
    fs = np.asarray([tree.f(j) for j in range(tree.depth + 1)], dtype=np.int64)[first]
    return first, lv.num[K] % fs


def layer_orthogonality(tree, K, level):
    """Geometric sums sum_{k in block} exp(2 pi i k (t_j - t_j')) within each layer.

    For layers l < level the sum must equal 2^(level-1) 1{j = j'}; the
    returned `max_dev` is the largest absolute deviation over those pairs.
    The top layer l = level is reported separately as the norm of its
    normalized Gram block.
    """
    K = np.asarray(K, dtype=np.int64)
    lv = tree.nodes(level)
    first, r = layer_labels(tree, level, K)
    k0, k1 = block_range(level)
    k = np.arange(k0, k1, dtype=np.int64)
    m = k.size
    max_dev = 0.0
    top_norm = 0.0
    groups = 0
    for ell, rr in sorted(set(zip(first.tolist(), r.tolist()))):
        sel = K[(first == ell) & (r == rr)]
        u = (lv.num[sel] - rr) // tree.f(ell)  # t = u / 2^ell + const within the layer
        if ell < level:
            P = 1 << ell
            dq = np.unique((u[:, None] - u[None, :]) % P)
            ph = ((np.outer(dq, k) % P) / P) * 2 * np.pi
            s = np.cos(ph).sum(axis=1) + 1j * np.sin(ph).sum(axis=1)
            target = np.where(dq == 0, m, 0)
            max_dev = max(max_dev, float(np.abs(s - target).max()))
            groups += 1
        else:
            _, c, sn = _trig(tree, level, sel)
            top_norm = max(top_norm, op_norm(c @ c.T + sn @ sn.T) / m)
    return {"max_dev": max_dev, "groups": groups, "top_layer_norm": float(top_norm), "terms": m}


# level-by-level coupling


def gaussian_completion(system, psi, rng, rank_tol=1e-10):
    """g ~ N(0, I) conditioned on A g = psi, A = vectors / sqrt(n)."""
    A = system.vectors / math.sqrt(system.n)
    Up = pseudo_inverse(system.U, rank_tol)
    xi = rng.standard_normal(system.n)
    return A.T @ (Up @ psi) + xi - A.T @ (Up @ (A @ xi))


@dataclass
class LevelReport:
    level: int
    size_K: int
    norm_U: float
    norm_V: float
    sup_gap: float
    bound: float
    bound_trivial: float
    truncated: float
    note: str = ""


@dataclass(eq=False)
class HierRun:
    tree: HierTree
    gamma: float
    delta: float
    spec: NoiseSpec
    seed: int
    values: list = field(default_factory=list)
    reports: list = field(default_factory=list)
    K: list = field(default_factory=list)

    def rows(self):
        return [dict(r.__dict__, seed=self.seed) for r in self.reports]


def hierarchical_coupling(depth, gamma, delta=None, spec=None, seed=0, mesh_power=0,
                          dt=HIER_DT, horizon=None, tree=None, with_norm_V=False):
    """Couple the a- and g-blocks level by level on the children of thick parents."""
    delta = 0.1 * gamma if delta is None else delta
    _check_gd(gamma, delta)
    spec = spec or NoiseSpec.rademacher()
    tree = tree if tree is not None else build_tree(depth, mesh_power)
    run = HierRun(tree, gamma, delta, spec, seed)
    Sa = Sg = np.zeros(1)
    prev = None
    for lev in range(1, depth + 1):
        rng = stream(seed, "hier", lev)
        K = thick_children(tree, lev, prev, gamma, delta)
        m = 1 << (lev - 1)
        N = 2 * m
        note = ""
        nU = nV = math.nan
        trunc = 0.0
        if K.size == 0 or K.size > N:
            note = "empty K" if K.size == 0 else "|K| > 2^n"
            a = spec.sample(rng, (2, m))
            g = rng.standard_normal((2, m))
        else:
            system = dft_vector_system(tree, K, lev)
            res = run_coupling(system, spec, dt, horizon, rng, keep_values=True,
                               seed_info={"seed": seed, "level": lev})
            a = np.vstack([res.values[0::2], res.values[1::2]])
            gv = gaussian_completion(system, res.psi_inf, rng)
            g = np.vstack([gv[0::2], gv[1::2]])
            nU = system.norm_U
            trunc = res.truncation_mass
            if with_norm_V:
                nV = spectral_norm_V(tree, K, lev).norm_V
        Xa = block_values(tree, lev, a)
        Xg = block_values(tree, lev, g)
        Sa = accumulate(tree, lev, Xa, Sa)
        Sg = accumulate(tree, lev, Xg, Sg)
        prev = BlockValues(lev, Xa, Xg, Sa, Sg)
        run.values.append(prev)
        run.K.append(K)
        if K.size and not note:
            gap = float(np.abs(Xa[K] - Xg[K]).max())
            bnd = math.sqrt(2) * theoretical_gap_bound(N, K.size, nU, spec.beta)
            triv = math.sqrt(2) * theoretical_gap_bound(N, K.size, float(K.size), spec.beta)
        else:
            gap = bnd = triv = math.nan
        run.reports.append(LevelReport(lev, int(K.size), nU, nV, gap, bnd, triv, trunc, note))
    return run


def level_slope(levels, medians):
    """Least-squares slope of log2(median gap) against level (finite entries only)."""
    x = np.asarray(levels, dtype=float)
    y = np.asarray(medians, dtype=float)
    keep = np.isfinite(y) & (y > 0)
    if keep.sum() < 2:
        return math.nan
    return float(np.polyfit(x[keep], np.log2(y[keep]), 1)[0])


# Radon-Nikodym ratio


def log_normalizers(tree, spec, gamma, depth=None):
    """Per level: log Z(v) = sum over ancestors of the block log-Laplace terms."""
    depth = tree.depth if depth is None else depth
    L = np.zeros(1)
    out = []
    for lev in range(1, depth + 1):
        L = accumulate(tree, lev, block_log_laplace(tree, lev, spec, gamma), L)
        out.append(L)
    return out


def rn_ratio(tree, gamma, values, spec_a, spec_g=None, depth=None):
    """log R(v) = (gamma S_g - log Z_g) - (gamma S_a - log Z_a) per level, in log space."""
    spec_g = spec_g or NoiseSpec.gaussian()
    depth = len(values) if depth is None else depth
    if gamma == 0:
        return [np.zeros(values[i].S_a.size) for i in range(depth)]
    za = log_normalizers(tree, spec_a, gamma, depth)
    zg = za if spec_g == spec_a else log_normalizers(tree, spec_g, gamma, depth)
    return [gamma * values[i].S_g - zg[i] - gamma * values[i].S_a + za[i] for i in range(depth)]


def rn_increments(tree, log_r, K):
    """Median |log R_n(v) - log R_{n-1}(parent v)| over v in K_n, per level n >= 2."""
    out = []
    for i in range(1, len(log_r)):
        lev = i + 1
        Kn = np.asarray(K[i])
        if Kn.size == 0:
            out.append(math.nan)
            continue
        par = tree.parent(lev)[Kn]
        out.append(float(np.median(np.abs(log_r[i][Kn] - log_r[i - 1][par]))))
    return out


# Laplace-transform check


def ancestry_weights(tree, level, node):
    """Coefficients (c_k, s_k), k < 2^level, with S(v) = sum a1_k c_k + a2_k s_k."""
    cs, ss = [], []
    for lev in range(level, 0, -1):
        k0, k1 = block_range(lev)
        k = np.arange(k0, k1, dtype=np.int64)
        ph = 2 * np.pi * _phase_table(tree, lev, np.array([node]), k)[0]
        cs.append(np.cos(ph) / np.sqrt(k))
        ss.append(np.sin(ph) / np.sqrt(k))
        node = int(tree.parent(lev)[node])
    return np.concatenate(cs[::-1]), np.concatenate(ss[::-1])


def node_at(tree, level, t):
    """Index of the level node whose interval contains t."""
    return int(np.searchsorted(tree.t(level), t, side="right") - 1)


def laplace_check(spec, lam, levels, draws=10_000, seed=0, t_star=1 / 3, tree=None,
                  mesh_power=0, window=1.0):
    """log E exp(lam S(v)) - (lam^2/2) Var S(v) at the node containing t_star.

    Monte Carlo estimates carry delta-method standard errors; the exact
    value from the product of one-dimensional transforms is reported too.
    """
    levels = list(levels)
    tree = tree if tree is not None else build_tree(max(levels), mesh_power)
    rows = []
    for lev in levels:
        node = node_at(tree, lev, t_star)
        c, s = ancestry_weights(tree, lev, node)
        var = float((c * c + s * s).sum())
        exact = float((spec.log_laplace(lam * c) + spec.log_laplace(lam * s)).sum()) - 0.5 * lam * lam * var
        rng = stream(seed, "laplace", lev)
        e = np.empty(draws)
        for j0 in range(0, draws, 2048):
            mm = min(2048, draws - j0)
            a = spec.sample(rng, (2, mm, c.size))
            e[j0:j0 + mm] = lam * (a[0] @ c + a[1] @ s)
        top = e.max()
        w = np.exp(e - top)
        mc_log = top + math.log(w.mean())
        se = float(w.std(ddof=1) / (math.sqrt(draws) * w.mean()))
        rows.append({"level": lev, "node": node, "var": var, "var_over_level_ln2": var / (lev * LN2),
                     "diff_mc": mc_log - 0.5 * lam * lam * var, "stderr": se, "diff_exact": exact})
    d = np.array([r["diff_mc"] for r in rows])
    se = max(r["stderr"] for r in rows)
    spread = float(d.max() - d.min())
    inconclusive = se > window
    return {"rows": rows, "spread": spread, "max_stderr": se, "window": window,
            "inconclusive": bool(inconclusive),
            "pass": None if inconclusive else bool(spread < window)}


def thick_count_study(depth, x_values, seeds, spec=None, mesh_power=0, seed0=0, tree=None):
    """log2 |K_depth| / depth for independent a and g fields, per gamma - delta."""
    spec = spec or NoiseSpec.rademacher()
    tree = tree if tree is not None else build_tree(depth, mesh_power)
    out = {float(x): [] for x in x_values}
    for i in range(seeds):
        vals = independent_fields(tree, spec, seed0 + i, depth - 1)
        for x in x_values:
            # any delta with gamma - delta = x; thick sets depend on the difference only
            gamma = min(math.sqrt(2) - 1e-9, x * 1.1)
            K = thick_children(tree, depth, vals[-1], gamma, gamma - x)
            out[float(x)].append(math.log2(K.size) / depth if K.size else -math.inf)
    return out
