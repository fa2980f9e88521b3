"""Randomized two-point embeddings of a law into Brownian motion, stopped
path simulation, and the survival function p_t = P(tau > t)."""
import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import numpy as np
from scipy import interpolate, special

from . import kernels
from .noise import NoiseSpec

DEFAULT_DT = 1e-3
DEFAULT_HORIZON = 50.0


class EmbeddingError(ValueError):
    """The law cannot be embedded (not centered, or one-sided)."""


class Strategy(str, Enum):
    EXACT_TWO_POINT = "exact_two_point"
    HALL = "hall_randomized_two_point"


def hall_pair_sample_discrete(values, probs, rng, size=None):
    """Target pairs for a finitely supported centered law.

    The pair law has weight proportional to (v - u) P(u) P(v) over atoms
    u < 0 < v; an atom at zero is embedded by the pair (0, 0).
    """
    values = np.asarray(values, dtype=float)
    probs = np.asarray(probs, dtype=float)
    if abs(values @ probs) > 1e-9 * max(1.0, np.abs(values).max()):
        raise EmbeddingError("law is not centered")
    neg = values < 0
    pos = values > 0
    p0 = float(probs[values == 0].sum())
    if p0 < 1 and not (neg.any() and pos.any()):
        raise EmbeddingError("law is one-sided")
    uu, vv = np.meshgrid(values[neg], values[pos], indexing="ij")
    w = (vv - uu) * np.outer(probs[neg], probs[pos])
    w = w.ravel()
    if w.size:
        w = w / w.sum() * (1.0 - p0)
    pair_u = np.append(uu.ravel(), 0.0)
    pair_v = np.append(vv.ravel(), 0.0)
    w = np.append(w, p0)
    idx = rng.choice(w.size, size=size, p=w / w.sum())
    return pair_u[idx], pair_v[idx]


def hall_pair_sample(spec, rng, size=None):
    """Draw (u, v), u <= 0 <= v, from the randomized two-point embedding of spec.

    For a symmetric continuous law the pair density (v - u) dmu(u) dmu(v)
    splits into two equal halves; in each, one endpoint has the law of |a|
    and the other its size-biased law.
    """
    if spec.is_discrete:
        vals, probs = spec.atoms()
        return hall_pair_sample_discrete(vals, probs, rng, size)
    y = spec.sample_abs(rng, size)
    z = spec.sample_abs_sizebiased(rng, size)
    flip = rng.random(size) < 0.5
    u = -np.where(flip, z, y)
    v = np.where(flip, y, z)
    return u, v


@dataclass(frozen=True)
class EmbeddingPlan:
    spec: NoiseSpec
    strategy: Strategy

    def sample_pairs(self, rng, size=None):
        return hall_pair_sample(self.spec, rng, size)


def make_plan(spec):
    if spec.is_discrete and len(spec.atoms()[0]) == 2:
        return EmbeddingPlan(spec, Strategy.EXACT_TWO_POINT)
    return EmbeddingPlan(spec, Strategy.HALL)


@dataclass(frozen=True)
class StoppedPath:
    tau: float
    value: float
    grid_dt: float
    truncated: bool


def simulate_exits(u, v, dt=DEFAULT_DT, rng=None, horizon=DEFAULT_HORIZON,
                   block=256, chunk=8192):
    """First exits of Brownian paths from (u_i, v_i), started at 0.

    Each step uses the bridge crossing probability, so exits between grid
    points are detected.  The exit time is reported at the middle of the
    step in which it happens.  Returns (tau, value, truncated); truncated
    paths carry tau = horizon and their last position.
    """
    u = np.atleast_1d(np.asarray(u, dtype=float))
    v = np.atleast_1d(np.asarray(v, dtype=float))
    if dt <= 0:
        raise ValueError("dt must be positive")
    m = u.size
    tau = np.zeros(m)
    value = np.zeros(m)
    trunc = np.zeros(m, dtype=bool)
    degenerate = (u == 0) & (v == 0)
    if np.any((u > 0) | (v < 0) | (((u == 0) | (v == 0)) & ~degenerate)):
        raise ValueError("pairs must satisfy u < 0 < v or be (0, 0)")
    total = int(math.ceil(horizon / dt))
    todo = np.flatnonzero(~degenerate)
    for c0 in range(0, todo.size, chunk):
        live = todo[c0:c0 + chunk]
        x = np.zeros(live.size)
        step0 = 0
        while live.size and step0 < total:
            S = min(block, total - step0)
            z = rng.standard_normal((live.size, S))
            w = rng.random((live.size, S))
            steps, side = kernels.exit_block(x, u[live], v[live], z, w, dt)
            hit = steps >= 0
            idx = live[hit]
            tau[idx] = (step0 + steps[hit] + 0.5) * dt
            value[idx] = np.where(side[hit] < 0, u[idx], v[idx])
            live = live[~hit]
            x = x[~hit]
            step0 += S
        if live.size:
            tau[live] = horizon
            value[live] = x
            trunc[live] = True
    return tau, value, trunc


def simulate_stopped_path(pair, dt=DEFAULT_DT, rng=None, horizon=DEFAULT_HORIZON):
    u, v = pair
    if not (u < 0 < v):
        raise ValueError("pair must satisfy u < 0 < v")
    tau, value, trunc = simulate_exits([u], [v], dt, rng, horizon)
    return StoppedPath(float(tau[0]), float(value[0]), dt, bool(trunc[0]))


def embed(spec, n, rng, dt=DEFAULT_DT, horizon=DEFAULT_HORIZON):
    """n independent embeddings: (tau, value, truncated)."""
    u, v = hall_pair_sample(spec, rng, n)
    return simulate_exits(u, v, dt, rng, horizon)


# exact interval exit laws, on the unit interval first

_ODD = np.arange(1, 31, 2, dtype=float)
_IMAGES = np.arange(-3, 4, dtype=float)
_SWITCH = 0.2


def _G(b, s):
    """int_0^s erfc(b / sqrt(r)) dr for any real b."""
    ab = np.abs(b)
    with np.errstate(divide="ignore", invalid="ignore"):
        q = ab / np.sqrt(s)
        g = (s + 2 * ab * ab) * special.erfc(q) - 2 * ab * np.sqrt(s / math.pi) * np.exp(-q * q)
    g = np.where(s > 0, g, 0.0)
    return np.where(b >= 0, g, 2 * s - g)


def _unit_survival(x, s):
    x, s = np.broadcast_arrays(np.asarray(x, float), np.asarray(s, float))
    out = np.empty(x.shape)
    big = s >= _SWITCH
    if np.any(big):
        xb, sb = x[big][..., None], s[big][..., None]
        k = _ODD
        out[big] = (4 / (k * math.pi) * np.sin(k * math.pi * xb)
                    * np.exp(-0.5 * (k * math.pi) ** 2 * sb)).sum(-1)
    small = ~big
    if np.any(small):
        xs, ss = x[small][..., None], s[small][..., None]
        r2 = 2 * _IMAGES
        with np.errstate(divide="ignore", invalid="ignore"):
            rt = np.sqrt(ss)
            val = (special.ndtr((1 - xs + r2) / rt) - special.ndtr((-xs + r2) / rt)
                   - special.ndtr((1 + xs + r2) / rt) + special.ndtr((xs + r2) / rt)).sum(-1)
        inside = ((x[small] > 0) & (x[small] < 1)).astype(float)
        out[small] = np.where(s[small] > 0, val, inside)
    return np.clip(out, 0.0, 1.0)


def _unit_tail_integral(x, s):
    x, s = np.broadcast_arrays(np.asarray(x, float), np.asarray(s, float))
    out = np.empty(x.shape)
    big = s >= _SWITCH
    if np.any(big):
        xb, sb = x[big][..., None], s[big][..., None]
        k = _ODD
        lam = 0.5 * (k * math.pi) ** 2
        out[big] = (4 / (k * math.pi) * np.sin(k * math.pi * xb) * np.exp(-lam * sb) / lam).sum(-1)
    small = ~big
    if np.any(small):
        xs, ss = x[small][..., None], s[small][..., None]
        r2 = 2 * _IMAGES
        c = np.sqrt(0.5)
        head = 0.5 * (-_G(c * (1 - xs + r2), ss) + _G(c * (-xs + r2), ss)
                      + _G(c * (1 + xs + r2), ss) - _G(c * (xs + r2), ss)).sum(-1)
        out[small] = x[small] * (1 - x[small]) - head
    return np.maximum(out, 0.0)


def exit_survival(u, v, t):
    """P(Brownian motion from 0 stays in (u, v) up to time t)."""
    u, v, t = np.broadcast_arrays(*(np.asarray(a, float) for a in (u, v, t)))
    w = v - u
    ok = w > 0
    ws = np.where(ok, w, 1.0)
    return np.where(ok, _unit_survival(-u / ws, t / ws ** 2), 0.0)


def exit_tail_integral(u, v, t):
    """int_t^infinity P(tau > s) ds for the exit time of (u, v)."""
    u, v, t = np.broadcast_arrays(*(np.asarray(a, float) for a in (u, v, t)))
    w = v - u
    ok = w > 0
    ws = np.where(ok, w, 1.0)
    return np.where(ok, ws ** 2 * _unit_tail_integral(-u / ws, t / ws ** 2), 0.0)


def rademacher_survival(t, terms=60):
    """Series (4/pi) sum_j (-1)^j/(2j+1) exp(-(2j+1)^2 pi^2 t / 8), exit from (-1, 1)."""
    t = np.asarray(t, dtype=float)
    j = np.arange(terms)
    k = 2 * j + 1
    with np.errstate(over="ignore"):
        terms_ = ((-1.0) ** j / k) * np.exp(-np.multiply.outer(t, k * k) * math.pi ** 2 / 8)
    out = 4 / math.pi * terms_.sum(-1)
    return np.where(t <= 0, 1.0, np.clip(out, 0.0, 1.0))


# deterministic survival function of the embedding


def _gl_nodes(edges, order):
    x0, w0 = np.polynomial.legendre.leggauss(order)
    a, b = edges[:-1, None], edges[1:, None]
    x = (0.5 * (a + b) + 0.5 * (b - a) * x0).ravel()
    w = (0.5 * (b - a) * w0).ravel()
    return x, w


def _abs_edges(spec):
    """Panel edges for integrating against the law of |a|."""
    from .noise import NoiseKind
    if spec.kind is NoiseKind.UNIFORM:
        return np.linspace(0.0, spec.radius, 4)
    if spec.kind is NoiseKind.GAUSSIAN:
        return np.linspace(0.0, 9.0, 7)
    if spec.shape >= 1:
        top = min(spec.radius, spec.scale * 38.0 ** (1 / spec.shape))
        return np.linspace(0.0, top, 9)
    # density has an integrable kink at 0: refine geometrically
    return np.concatenate([[0.0], spec.radius * 2.0 ** -np.arange(11, -1, -1.0)])


def pair_quadrature(spec, order=8):
    """Nodes (u_j, v_j) and weights W_j for the law of the target pair.

    Exact for discrete laws; for continuous symmetric laws a tensor
    Gauss-Legendre rule over (|a|, size-biased |a|).
    """
    if spec.is_discrete:
        vals, probs = spec.atoms()
        neg, pos = vals < 0, vals > 0
        uu, vv = np.meshgrid(vals[neg], vals[pos], indexing="ij")
        w = ((vv - uu) * np.outer(probs[neg], probs[pos])).ravel()
        return uu.ravel(), vv.ravel(), w / w.sum()
    if not spec.is_symmetric:
        raise EmbeddingError("continuous laws must be symmetric")
    y, wy = _gl_nodes(_abs_edges(spec), order)
    fy = spec.abs_pdf(y) * wy
    fz = y * spec.abs_pdf(y) * wy
    fy, fz = fy / fy.sum(), fz / fz.sum()
    uu, vv = np.meshgrid(-y, y, indexing="ij")
    return uu.ravel(), vv.ravel(), np.outer(fy, fz).ravel()


class SurvivalFunction:
    """p_t and its tail integral I(t) = int_t^inf p_s ds for one law.

    Discrete laws are evaluated exactly; continuous laws are tabulated on a
    log time grid by quadrature over pairs and interpolated monotonically.
    """

    def __init__(self, spec):
        self.spec = spec
        self.u, self.v, self.w = pair_quadrature(spec)
        self.mean_tau = float(self.w @ (-self.u * self.v))
        self._exact = self.u.size <= 64
        if not self._exact:
            wmax = float((self.v - self.u).max())
            t = np.concatenate([[0.0], np.geomspace(1e-6, 8.0 * wmax ** 2, 240)])
            I = np.concatenate([self._eval_I(t[i:i + 8]) for i in range(0, t.size, 8)])
            P = np.concatenate([self._eval_p(t[i:i + 8]) for i in range(0, t.size, 8)])
            I = np.minimum.accumulate(I)
            P = np.minimum.accumulate(P)
            self._t_max = t[-1]
            self._I = interpolate.PchipInterpolator(t, I, extrapolate=False)
            self._P = interpolate.PchipInterpolator(t, P, extrapolate=False)

    def _eval_p(self, t):
        return exit_survival(self.u[:, None], self.v[:, None], np.asarray(t)[None, :]).T @ self.w

    def _eval_I(self, t):
        return exit_tail_integral(self.u[:, None], self.v[:, None], np.asarray(t)[None, :]).T @ self.w

    def p(self, t):
        t = np.asarray(t, dtype=float)
        if self._exact:
            return self._eval_p(t.ravel()).reshape(t.shape)
        out = self._P(np.minimum(t, self._t_max))
        return np.where(t >= self._t_max, 0.0, np.clip(out, 0.0, 1.0))

    def tail_integral(self, t):
        t = np.asarray(t, dtype=float)
        if self._exact:
            return self._eval_I(t.ravel()).reshape(t.shape)
        out = self._I(np.minimum(t, self._t_max))
        return np.where(t >= self._t_max, 0.0, np.maximum(out, 0.0))


@lru_cache(maxsize=16)
def survival_function(spec):
    return SurvivalFunction(spec)


@dataclass
class SurvivalCurve:
    t: np.ndarray
    p: np.ndarray
    stderr: np.ndarray
    n_mc: int
    truncated: int
    warning: bool

    def integral(self):
        return float(np.trapezoid(self.p, self.t))

    def rows(self):
        return [(float(a), float(b), float(c)) for a, b, c in zip(self.t, self.p, self.stderr)]


def survival_curve(spec, t_grid, n_mc, rng, dt=DEFAULT_DT, horizon=DEFAULT_HORIZON):
    """Monte Carlo estimate of p_t on t_grid, made nonincreasing."""
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.size == 0 or t_grid[0] != 0 or np.any(np.diff(t_grid) <= 0):
        raise ValueError("t_grid must be increasing and start at 0")
    tau, _, trunc = embed(spec, n_mc, rng, dt, horizon)
    tau = np.sort(np.where(trunc, np.inf, tau))
    p = 1.0 - np.searchsorted(tau, t_grid, side="right") / n_mc
    p = np.minimum.accumulate(p)
    p[0] = 1.0
    se = np.sqrt(p * (1 - p) / n_mc)
    # fewer than ten survivors at the last requested time means the tail is unresolved
    warning = bool(p[-1] * n_mc < 10)
    return SurvivalCurve(t_grid, p, se, n_mc, int(trunc.sum()), warning)


def tail_slope(t, p, n_mc, min_count=30, t_min=1.0):
    """Slope of log(-log p) against log t on the resolvable upper range."""
    t = np.asarray(t, float)
    p = np.asarray(p, float)
    ok = (t >= t_min) & (p * n_mc >= min_count) & (p < 1)
    if ok.sum() < 4:
        return math.nan
    t, p = t[ok], p[ok]
    half = t >= np.sqrt(t[0] * t[-1])
    if half.sum() < 3:
        half = np.ones_like(t, dtype=bool)
    return float(np.polyfit(np.log(t[half]), np.log(-np.log(p[half])), 1)[0])
