"""Coupling of (1/sqrt n) sum v_i a_i with its Gaussian counterpart through
stopped Brownian paths and one shared driving Brownian motion."""
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy import sparse

from . import kernels
from .noise import NoiseSpec
from .psd import op_norm, pseudo_inverse, sym_sqrt
from .rng import stream
from .skorokhod import hall_pair_sample, survival_function

DEFAULT_DT = 1e-2
RANK_TOL = 1e-12


class NormMode(str, Enum):
    INF = "inf_bound"
    L2 = "l2_bound"


@dataclass(eq=False)
class VectorSystem:
    """Columns v_1..v_n of a d x n array with U = (1/n) sum v_i v_i^T."""

    vectors: np.ndarray
    norm_mode: NormMode = NormMode.INF
    label: str = ""
    U: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        v = np.atleast_2d(np.asarray(self.vectors, dtype=float))
        self.vectors = v
        self.norm_mode = NormMode(self.norm_mode)
        d, n = v.shape
        if n < 1:
            raise ValueError("need at least one vector")
        tol = 1e-12
        if np.any((v * v).sum(axis=0) > d * (1 + tol)):
            raise ValueError("some ||v_i||_2 exceeds sqrt(d)")
        if self.norm_mode is NormMode.INF and np.abs(v).max() > 1 + tol:
            raise ValueError("some ||v_i||_inf exceeds 1")
        self.U = (v @ v.T) / n

    @property
    def d(self):
        return self.vectors.shape[0]

    @property
    def n(self):
        return self.vectors.shape[1]

    @property
    def norm_U(self):
        return op_norm(self.U)

    @property
    def meets_hypotheses(self):
        """2 <= d <= n, the range where the dimension-free bound applies."""
        return 2 <= self.d <= self.n


def dft_subcolumn_system(n, d):
    """First d rows of the cos/sin columns of the n-point DFT, k = 0..n/2-1."""
    if n % 2 or d > n:
        raise ValueError("need even n and d <= n")
    j = np.arange(d)[:, None]
    k = np.arange(n // 2)[None, :]
    th = 2 * np.pi * ((j * k) % n) / n
    v = np.empty((d, n))
    v[:, 0::2] = np.cos(th)
    v[:, 1::2] = np.sin(th)
    return VectorSystem(v, NormMode.INF, f"dft_sub(n={n},d={d})")


def hartley_system(n):
    """d = n Hartley columns cas(2 pi i j / n); U is the identity."""
    i = np.arange(n)
    th = 2 * np.pi * (np.outer(i, i) % n) / n
    return VectorSystem(np.cos(th) + np.sin(th), NormMode.L2, f"hartley(n={n})")


def identity_system(d):
    return VectorSystem(np.eye(d), NormMode.INF, f"identity(d={d})")


def constant_system(n):
    """All v_i = e_1 with d = 1."""
    return VectorSystem(np.ones((1, n)), NormMode.INF, f"constant(n={n})")


def make_system(kind, n, d):
    if kind == "dft_sub":
        return dft_subcolumn_system(n, d)
    if kind == "hartley":
        if d != n:
            raise ValueError("hartley system has d = n")
        return hartley_system(n)
    if kind == "identity":
        if d != n:
            raise ValueError("identity system has d = n")
        return identity_system(d)
    if kind == "constant":
        return constant_system(n)
    raise ValueError(f"unknown system kind {kind!r}")


def gamma_matrix(system, alive):
    """sqrt((1/n) sum over alive i of v_i v_i^T)."""
    alive = np.asarray(alive, dtype=bool)
    if alive.shape != (system.n,):
        raise ValueError("alive must have length n")
    va = system.vectors[:, alive]
    return sym_sqrt(va @ va.T / system.n)


def averaged_matrix(system, p_t):
    if not 0.0 <= p_t <= 1.0:
        raise ValueError("p_t must lie in [0, 1]")
    return math.sqrt(p_t) * sym_sqrt(system.U)


def brownian_completion_step(Q, dX, dB_prime, rank_tol=1e-10):
    """dW = Q^+ dX + (I - Q^+ Q) dB'.

    I - Q^+ Q is an orthogonal projector, so it is its own square root.
    """
    Q = np.asarray(Q, dtype=float)
    dX = np.asarray(dX, dtype=float)
    dB_prime = np.asarray(dB_prime, dtype=float)
    if Q.shape != (dX.size, dX.size) or dB_prime.shape != dX.shape:
        raise ValueError("dimension mismatch")
    qp = pseudo_inverse(Q, rank_tol)
    proj = np.eye(dX.size) - qp @ Q
    return qp @ dX + proj @ dB_prime


def default_horizon(n, beta):
    return max(50.0, 10.0 * math.log(max(n, 2)) ** (1.0 / beta))


def theoretical_gap_bound(n, d, normU, beta, r=1.0):
    """r (ln n)^{1+1/beta} max((d u / n)^{1/4}, (d / n)^{1/2}), u = max(||U||, d/n)."""
    u = max(normU, d / n)
    return r * math.log(n) ** (1 + 1 / beta) * max((d * u / n) ** 0.25, (d / n) ** 0.5)


@dataclass
class CouplingResult:
    phi_inf: np.ndarray
    psi_inf: np.ndarray
    gap_inf_norm: float
    realized_qv: np.ndarray
    sup_gap: np.ndarray
    truncation_mass: float
    tau_max: float
    seed: dict
    values: np.ndarray = None


@dataclass
class CouplingLog:
    """What is needed to rebuild every step after the fact."""

    death_step: np.ndarray  # (T, n); -1 for paths dead before the first step
    weights: np.ndarray  # w_k with w_k^2 = (I(t_k) - I(t_{k+1})) / dt
    tail: np.ndarray  # I at the step where each trial finished
    steps: np.ndarray  # number of simulated steps per trial
    dt: float


@dataclass
class CouplingBatch:
    phi: np.ndarray
    psi: np.ndarray
    qv: np.ndarray
    sup_gap: np.ndarray
    truncation_mass: np.ndarray
    tau_max: np.ndarray
    seed: dict
    values: np.ndarray = None
    log: CouplingLog = None

    @property
    def trials(self):
        return self.phi.shape[0]

    @property
    def gap(self):
        return np.abs(self.phi - self.psi).max(axis=1)

    def result(self, i):
        return CouplingResult(
            self.phi[i].copy(), self.psi[i].copy(), float(self.gap[i]), self.qv[i].copy(),
            self.sup_gap[i].copy(), float(self.truncation_mass[i]), float(self.tau_max[i]),
            dict(self.seed, trial=i), None if self.values is None else self.values[i].copy())


class _Stretch:
    """Per-trial constants valid while the alive set is unchanged."""

    def __init__(self, sqrtU, gamma2):
        w, e = np.linalg.eigh(gamma2)
        top = np.maximum(np.abs(w).max(axis=1, keepdims=True), 1e-300)
        keep = w > RANK_TOL * top
        sq = np.where(keep, np.sqrt(np.maximum(w, 0.0)), 0.0)
        inv = np.where(keep, 1.0 / np.where(keep, sq, 1.0), 0.0)
        et = np.swapaxes(e, 1, 2)
        qplus = (e * inv[:, None, :]) @ et
        proj = (e * (~keep)[:, None, :]) @ et
        gamma = (e * sq[:, None, :]) @ et
        self.m1 = sqrtU @ qplus
        self.m2 = sqrtU @ proj
        self.g2diag = np.einsum("tjj->tj", gamma2)
        self.gsu = np.einsum("tjk,kj->tj", gamma, sqrtU)


def run_coupling_batch(system, spec, dt=DEFAULT_DT, horizon=None, rng=None, trials=1,
                       log=False, keep_values=False, seed_info=None):
    """Run `trials` independent couplings in lockstep on a shared time grid.

    Per step: dX = (1/sqrt n) sum over alive i of v_i dB^i (stopped exactly
    at the exit), dW = Q^+ dX + P dB', dPhi = Gamma dW = dX and
    dPsi = w_k sqrt(U) dW.  Once every path of a trial has exited, the rest
    of Psi is a single Gaussian with covariance U I(t).
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    V = system.vectors
    d, n = V.shape
    T = int(trials)
    if horizon is None:
        horizon = default_horizon(n, spec.beta)
    nsteps = int(math.ceil(horizon / dt))
    sf = survival_function(spec)
    I = sf.tail_integral(dt * np.arange(nsteps + 1))
    I = np.minimum.accumulate(I)
    wts = np.sqrt(np.maximum(I[:-1] - I[1:], 0.0) / dt)
    sqrtU = sym_sqrt(system.U)
    udiag = np.diag(system.U).copy()
    sqn = math.sqrt(n)
    sdt = math.sqrt(dt)

    lo, hi = hall_pair_sample(spec, rng, (T, n))
    lo = np.ascontiguousarray(lo, dtype=float)
    hi = np.ascontiguousarray(hi, dtype=float)
    x = np.zeros((T, n))
    alive = ~((lo == 0) & (hi == 0))
    death = np.where(alive, nsteps, -1)
    n_alive = alive.sum(axis=1)
    gamma2 = np.einsum("ti,ji,ki->tjk", alive.astype(float), V, V, optimize=True) / n
    st = _Stretch(sqrtU, gamma2)
    m1, m2, g2diag, gsu = st.m1, st.m2, st.g2diag, st.gsu

    phi = np.zeros((T, d))
    psi = np.zeros((T, d))
    qv = np.zeros((T, d))
    sup = np.zeros((T, d))
    active = n_alive > 0
    steps = np.full(T, nsteps)
    tail = np.zeros(T)
    xf, lof, hif, alivef, deathf = x.reshape(-1), lo.reshape(-1), hi.reshape(-1), alive.reshape(-1), death.reshape(-1)
    Vt = np.ascontiguousarray(V.T)

    def finish(idx, k):
        z = rng.standard_normal((idx.size, d))
        psi[idx] += math.sqrt(I[k]) * z @ sqrtU
        qv[idx] += I[k] * udiag
        tail[idx] = I[k]
        steps[idx] = k
        active[idx] = False
        sup[idx] = np.maximum(sup[idx], np.abs(phi[idx] - psi[idx]))

    finish(np.flatnonzero(~active), 0)
    for k in range(nsteps):
        act = np.flatnonzero(active)
        if act.size == 0:
            break
        flat = np.flatnonzero(alivef)
        ti = flat // n
        pi = flat - ti * n
        z = rng.standard_normal(flat.size)
        uu = rng.random(flat.size)
        xs = xf[flat]
        dx, side = kernels.bridge_step(xs, lof[flat], hif[flat], z, uu, dt)
        xf[flat] = xs
        indptr = np.searchsorted(ti, np.arange(T + 1))
        dX = sparse.csr_matrix((dx, pi, indptr), shape=(T, n)) @ Vt / sqn
        dB = sdt * rng.standard_normal((act.size, d))
        wk = wts[k]
        if act.size == T:
            dW = np.einsum("tjk,tk->tj", m1, dX) + np.einsum("tjk,tk->tj", m2, dB)
            phi += dX
            psi += wk * dW
            qv += dt * (g2diag - 2 * wk * gsu + wk * wk * udiag)
            np.maximum(sup, np.abs(phi - psi), out=sup)
        else:
            dXa = dX[act]
            dW = np.einsum("tjk,tk->tj", m1[act], dXa) + np.einsum("tjk,tk->tj", m2[act], dB)
            phi[act] += dXa
            psi[act] += wk * dW
            qv[act] += dt * (g2diag[act] - 2 * wk * gsu[act] + wk * wk * udiag)
            sup[act] = np.maximum(sup[act], np.abs(phi[act] - psi[act]))

        hit = side != 0
        if not hit.any():
            continue
        df = flat[hit]
        alivef[df] = False
        deathf[df] = k
        dti = ti[hit]
        vd = Vt[pi[hit]]
        outer = vd[:, :, None] * vd[:, None, :] / n
        aff, start = np.unique(dti, return_index=True)
        gamma2[aff] -= np.add.reduceat(outer, start, axis=0)
        n_alive[aff] -= np.diff(np.append(start, dti.size))
        done = aff[n_alive[aff] == 0]
        if done.size:
            gamma2[done] = 0.0
            finish(done, k + 1)
        upd = aff[n_alive[aff] > 0]
        if upd.size:
            st = _Stretch(sqrtU, gamma2[upd])
            m1[upd], m2[upd], g2diag[upd], gsu[upd] = st.m1, st.m2, st.g2diag, st.gsu

    left = np.flatnonzero(active)
    if left.size:
        finish(left, nsteps)
    trunc = alive.sum(axis=1) / n
    tau = np.where(death >= 0, (np.minimum(death, nsteps) + 0.5) * dt, 0.0)
    seed = dict(seed_info or {})
    out = CouplingBatch(phi, psi, qv, sup, trunc, tau.max(axis=1), seed)
    if keep_values:
        out.values = x
    if log:
        out.log = CouplingLog(death.copy(), wts, tail, steps, dt)
    return out


def run_coupling(system, spec, dt=DEFAULT_DT, horizon=None, rng=None, keep_values=False,
                 seed_info=None):
    b = run_coupling_batch(system, spec, dt, horizon, rng, 1, keep_values=keep_values,
                           seed_info=seed_info)
    return b.result(0)


def replay_log(system, batch, i):
    """Rebuild trial i step by step from its log, independently of the engine.

    Returns (qv, worst) where qv is the quadrature of ||e_j^T (Gamma - G)||^2
    plus the exact tail, and worst is max over steps of
    ||Gamma - G|| / (3 sqrt(||Gamma^2 - G^2||)).
    """
    lg = batch.log
    V = system.vectors
    d, n = V.shape
    death = lg.death_step[i]
    sqrtU = sym_sqrt(system.U)
    qv = np.zeros(d)
    worst = 0.0
    k_end = int(lg.steps[i])
    events = np.unique(death[(death >= 0) & (death < k_end)])
    bounds = np.concatenate([[0], events + 1, [k_end]])
    bounds = np.unique(np.clip(bounds, 0, k_end))
    for a, b in zip(bounds[:-1], bounds[1:]):
        if b <= a:
            continue
        alive = death >= a
        va = V[:, alive]
        g2 = va @ va.T / n
        gam = sym_sqrt(g2, rel_floor=RANK_TOL)
        w = lg.weights[a:b]
        diff = gam[None] - w[:, None, None] * sqrtU[None]
        qv += lg.dt * (diff ** 2).sum(axis=2).sum(axis=0)
        A = g2[None] - (w * w)[:, None, None] * system.U[None]
        lhs = op_norm(diff)
        rhs = 3 * np.sqrt(op_norm(A))
        with np.errstate(divide="ignore", invalid="ignore"):
            r = np.where(lhs > 0, lhs / rhs, 0.0)
        worst = max(worst, float(np.max(r)))
    qv += lg.tail[i] * np.diag(system.U)
    return qv, worst


# scaling studies


@dataclass(frozen=True)
class Cell:
    n: int
    d: int
    kind: str = "dft_sub"
    spec: NoiseSpec = None


def _cell_batch(args):
    cell, spec, trials, dt, seed, ci, bi = args
    system = make_system(cell.kind, cell.n, cell.d)
    rng = stream(seed, "cell", ci, bi)
    b = run_coupling_batch(system, spec, dt, None, rng, trials)
    return ci, bi, b.gap, b.truncation_mass > 0


def scaling_study(cells, trials, seed, dt=DEFAULT_DT, spec=None, batch=50, threads=1):
    """Median and 90th-percentile gaps per cell.  Rows are dicts."""
    spec = spec or NoiseSpec.rademacher()
    tasks = []
    for ci, cell in enumerate(cells):
        cs = cell.spec or spec
        for bi, b0 in enumerate(range(0, trials, batch)):
            tasks.append((cell, cs, min(batch, trials - b0), dt, seed, ci, bi))
    if threads and threads > 1:
        with ProcessPoolExecutor(threads) as ex:
            parts = list(ex.map(_cell_batch, tasks))
    else:
        parts = [_cell_batch(t) for t in tasks]
    parts.sort(key=lambda r: (r[0], r[1]))
    rows = []
    for ci, cell in enumerate(cells):
        gaps = np.concatenate([p[2] for p in parts if p[0] == ci])
        trunc = np.concatenate([p[3] for p in parts if p[0] == ci])
        system = make_system(cell.kind, cell.n, cell.d)
        cs = cell.spec or spec
        nu = system.norm_U
        rows.append({
            "n": cell.n, "d": cell.d, "kind": cell.kind, "spec": str(cs),
            "norm_U": nu, "trials": int(gaps.size),
            "median_gap": float(np.median(gaps)),
            "p90_gap": float(np.quantile(gaps, 0.9)),
            "bound_value": theoretical_gap_bound(cell.n, cell.d, nu, cs.beta),
            "truncated_frac": float(trunc.mean()),
        })
    return rows


def fit_slope(rows, x="d_over_n"):
    """Least-squares slope of log(median gap) against log(d/n) (or log n)."""
    use = [r for r in rows if r["truncated_frac"] <= 0.1]
    if len(use) < 2:
        return math.nan
    if x == "d_over_n":
        xs = np.log([r["d"] / r["n"] for r in use])
    else:
        xs = np.log([r["n"] for r in use])
    ys = np.log([r["median_gap"] for r in use])
    return float(np.polyfit(xs, ys, 1)[0])


# quadratic-variation tails


def qv_tail_check(qv, sup_gap, M, eps, C=4.0, min_runs=50):
    """Frequency of sup |gap| > sqrt(2 M log(C/eps)) among runs with QV <= M."""
    qv = np.asarray(qv, dtype=float)
    sup_gap = np.asarray(sup_gap, dtype=float)
    keep = qv <= M
    n = int(keep.sum())
    thr = math.sqrt(2 * M * math.log(C / eps)) if C > eps else 0.0
    allowed = 2 * eps
    if n < min_runs:
        return {"pass": None, "inconclusive": True, "runs": n, "threshold": thr}
    frac = float(np.mean(sup_gap[keep] > thr))
    p = min(allowed, 1.0)
    se = math.sqrt(p * (1 - p) / n)
    return {"pass": frac <= allowed + 3 * se, "inconclusive": False, "runs": n,
            "threshold": thr, "frequency": frac, "allowed": allowed}


def brownian_control(runs, M, dt, rng):
    """Plain Brownian motions on [0, M]: (quadratic variation, running sup of |B|)."""
    steps = int(math.ceil(M / dt))
    sup = np.zeros(runs)
    b = np.zeros(runs)
    for _ in range(steps):
        b += math.sqrt(dt) * rng.standard_normal(runs)
        np.maximum(sup, np.abs(b), out=sup)
    return np.full(runs, steps * dt), sup
