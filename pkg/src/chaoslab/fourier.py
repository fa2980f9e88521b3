"""Random Fourier series with 1/sqrt(k) weights and their normalized
exponentials (prelimiting chaos measures)."""
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.interpolate import CubicSpline

from . import kernels
from .noise import NoiseKind, NoiseSpec
from .rng import stream


class NormalizerMode:
    EXACT = "exact_laplace"
    GAUSSIAN = "gaussian_formula"
    MONTE_CARLO = "monte_carlo"


@dataclass(eq=False)
class FourierDraw:
    """Coefficients a1_k, a2_k for k = 1..n."""

    n: int
    a1: np.ndarray
    a2: np.ndarray
    spec: NoiseSpec

    def __post_init__(self):
        self.a1 = np.asarray(self.a1, dtype=float)
        self.a2 = np.asarray(self.a2, dtype=float)
        if self.a1.shape != (self.n,) or self.a2.shape != (self.n,):
            raise ValueError("need n coefficients of each kind")

    @property
    def coeffs(self):
        """Interleaved (a1_1, a2_1, a1_2, a2_2, ...)."""
        return np.column_stack([self.a1, self.a2]).ravel()

    def truncate(self, m):
        if m > self.n:
            raise ValueError("cannot extend a draw")
        return FourierDraw(m, self.a1[:m].copy(), self.a2[:m].copy(), self.spec)


def block_range(level):
    """Frequencies [2^(level-1), 2^level) of one dyadic block."""
    if level < 1:
        raise ValueError("levels start at 1")
    return 2 ** (level - 1), 2 ** level


def block_coefficients(spec, seed, level, source="a"):
    """(2, 2^(level-1)) coefficients of one block from its own stream."""
    lo, hi = block_range(level)
    rng = stream(seed, "fourier", source, level)
    return spec.sample(rng, (2, hi - lo))


def draw_coefficients(spec, n, seed, source="a"):
    """Coefficients for k <= n; prefixes agree across n for a fixed seed."""
    if n < 1:
        raise ValueError("n must be positive")
    top = int(n).bit_length()
    parts = [block_coefficients(spec, seed, lev, source) for lev in range(1, top + 1)]
    c = np.concatenate(parts, axis=1)[:, :n]
    return FourierDraw(n, c[0], c[1], spec)


def _uniform_size(t):
    """N if t is exactly (0, 1/N, ..., (N-1)/N), else None."""
    N = t.size
    if N == 0:
        return None
    if np.array_equal(t, np.arange(N) / N):
        return N
    return None


def series_fft(draw, N):
    """S at j/N, j < N, through one inverse FFT with frequencies folded mod N."""
    k = np.arange(1, draw.n + 1)
    c = np.zeros(N, dtype=complex)
    np.add.at(c, k % N, (draw.a1 - 1j * draw.a2) / np.sqrt(k))
    return (np.fft.ifft(c) * N).real


def series_eval(draw, t_grid, method="auto"):
    """S(t) = sum_k (a1_k cos 2 pi k t + a2_k sin 2 pi k t) / sqrt(k)."""
    t = np.asarray(t_grid, dtype=float)
    if method not in ("auto", "direct", "fft"):
        raise ValueError(f"unknown method {method!r}")
    N = _uniform_size(t) if method != "direct" else None
    use_fft = N is not None and N & (N - 1) == 0 and N >= 4 * draw.n
    if method == "fft" and not use_fft:
        raise ValueError("fft path needs the uniform grid j/N, N a power of two >= 4n")
    if use_fft:
        return series_fft(draw, N)
    return kernels.series_direct(t.ravel(), draw.a1, draw.a2, 1).reshape(t.shape)


def _trig_tables(k, t):
    """cos and sin of 2 pi k t, exact phase reduction on uniform grids."""
    N = _uniform_size(t)
    if N is not None:
        ph = (np.outer(t * N, k).astype(np.int64) % N) / N
    else:
        ph = np.outer(t, k) % 1.0
    return np.cos(2 * np.pi * ph), np.sin(2 * np.pi * ph)


def log_normalizer(spec, n, gamma, t, mode=NormalizerMode.EXACT, chunk=1 << 22):
    """log E exp(gamma S_n(t)) in log space."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if gamma == 0:
        return np.zeros(t.shape)
    k = np.arange(1, n + 1, dtype=float)
    if mode == NormalizerMode.GAUSSIAN or spec.kind is NoiseKind.GAUSSIAN:
        if mode not in (NormalizerMode.GAUSSIAN, NormalizerMode.EXACT):
            raise ValueError("use normalizer_mc for Monte Carlo estimates")
        if mode == NormalizerMode.GAUSSIAN and spec.kind is not NoiseKind.GAUSSIAN:
            raise ValueError("Gaussian formula is exact only for Gaussian coefficients")
        return np.full(t.shape, 0.5 * gamma * gamma * float(np.sum(1.0 / k)))
    if mode != NormalizerMode.EXACT:
        raise ValueError("use normalizer_mc for Monte Carlo estimates")
    out = np.empty(t.size)
    step = max(1, chunk // n)
    w = gamma / np.sqrt(k)
    logm = _log_mgf_table(spec, abs(float(gamma)))
    N = _uniform_size(t)
    for j0 in range(0, t.size, step):
        tt = t[j0:j0 + step]
        if N is not None:
            ph = (np.outer(np.arange(j0, j0 + tt.size), np.arange(1, n + 1)) % N) / N
            c, s = np.cos(2 * np.pi * ph), np.sin(2 * np.pi * ph)
        else:
            c, s = _trig_tables(k, tt)
        out[j0:j0 + tt.size] = (logm(c * w) + logm(s * w)).sum(axis=1)
    if np.any(np.isnan(out)):
        raise FloatingPointError("normalizer is NaN")
    return out.reshape(t.shape)


def _log_mgf_table(spec, gmax):
    """log M on [-gmax, gmax]; laws without a closed form go through a spline."""
    if spec.kind is not NoiseKind.TRUNCATED_EXP:
        return spec.log_laplace
    lam = np.linspace(-gmax, gmax, 4001)
    return CubicSpline(lam, spec.log_laplace(lam))


def normalizer(spec, n, gamma, t, mode=NormalizerMode.EXACT):
    out = np.exp(log_normalizer(spec, n, gamma, t, mode))
    if not np.all(np.isfinite(out)):
        raise OverflowError("normalizer overflows; use log_normalizer")
    return out if out.size > 1 else float(out[0])


def normalizer_mc(spec, n, gamma, t, draws, rng):
    """Monte Carlo E exp(gamma S_n(t)) at one t: (mean, stderr)."""
    k = np.arange(1, n + 1)
    c = np.cos(2 * np.pi * ((k * t) % 1.0)) / np.sqrt(k)
    s = np.sin(2 * np.pi * ((k * t) % 1.0)) / np.sqrt(k)
    vals = np.empty(draws)
    for j0 in range(0, draws, 4096):
        m = min(4096, draws - j0)
        a = spec.sample(rng, (2, m, n))
        vals[j0:j0 + m] = np.exp(gamma * (a[0] @ c + a[1] @ s))
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(draws))


@lru_cache(maxsize=32)
def _cached_log_z(spec, n, gamma, N):
    return log_normalizer(spec, n, gamma, np.arange(N) / N)


@dataclass(eq=False)
class PiecewiseMeasure:
    grid: np.ndarray
    density: np.ndarray
    gamma: float
    normalizer_mode: str
    n: int = 0

    def __post_init__(self):
        if np.any(self.density < 0) or not np.all(np.isfinite(self.density)):
            raise ValueError("density must be finite and nonnegative")

    def _weights(self):
        N = _uniform_size(self.grid)
        if N is not None:
            return np.full(N, 1.0 / N)
        # periodic trapezoid rule
        t = np.append(self.grid, self.grid[0] + 1.0)
        h = np.diff(t)
        return 0.5 * (h + np.roll(h, 1))

    def mass(self):
        return float(self._weights() @ self.density)

    def top_fraction(self, q=0.01):
        """Share of mass in the heaviest fraction q of grid cells."""
        m = self.density * self._weights()
        k = max(1, int(math.ceil(q * m.size)))
        top = np.partition(m, m.size - k)[m.size - k:]
        return float(top.sum() / m.sum())

    def participation_ratio(self):
        r = self.density
        return float(r.sum() ** 2 / (r * r).sum())


def prelimit_gmc(draw, gamma, grid, mode=NormalizerMode.EXACT):
    """density(t) = exp(gamma S(t) - log Z(t))."""
    grid = np.asarray(grid, dtype=float)
    if grid.size < 4 * draw.n:
        raise ValueError("grid needs at least 4n points")
    S = series_eval(draw, grid)
    N = _uniform_size(grid)
    if N is not None and mode == NormalizerMode.EXACT:
        logz = _cached_log_z(draw.spec, draw.n, float(gamma), N)
    else:
        logz = log_normalizer(draw.spec, draw.n, gamma, grid, mode)
    return PiecewiseMeasure(grid, np.exp(gamma * S - logz), float(gamma), mode, draw.n)


def figure_data(gammas, ns, spec, seed, grid_size=1 << 14):
    """Measures for every (gamma, n) from one nested draw."""
    grid = np.arange(grid_size) / grid_size
    full = draw_coefficients(spec, max(ns), seed)
    cells = {}
    for n in ns:
        d = full.truncate(n)
        for g in gammas:
            cells[(float(g), int(n))] = prelimit_gmc(d, g, grid)
    return grid, cells


def total_masses(spec, n, gamma, draws, seed, grid_size=None):
    """Masses of independent prelimiting measures (one stream per draw)."""
    N = grid_size or 4 * n
    grid = np.arange(N) / N
    out = np.empty(draws)
    for i in range(draws):
        d = draw_coefficients(spec, n, seed, source=f"mass{i}")
        out[i] = prelimit_gmc(d, gamma, grid).mass()
    return out
