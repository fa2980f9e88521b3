"""Centered, unit-variance scalar laws with stretched-exponential tails."""
import json
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy import integrate, special

SQRT3 = math.sqrt(3.0)
# exponents above this are treated as "bounded" and capped
BOUNDED_ALPHA = 4.0


_VALIDATED = set()


class NoiseKind(str, Enum):
    GAUSSIAN = "gaussian"
    RADEMACHER = "rademacher"
    UNIFORM = "uniform"
    TWO_POINT = "two_point"
    TRUNCATED_EXP = "truncated_exp"


def tail_beta(alpha):
    """Exponent beta = alpha / (2 + alpha) governing the tail of tau."""
    alpha = float(alpha)
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    return alpha / (2.0 + alpha)


@dataclass(frozen=True)
class NoiseSpec:
    """One scalar law.

    ``p`` is the weight of the positive atom of a two-point law; ``shape`` is
    the exponent of a truncated law with density proportional to
    exp(-|x/s|**shape) on |x/s|**shape <= cutoff, with s fixed by unit variance.
    """

    kind: NoiseKind
    p: float = None
    shape: float = None
    cutoff: float = 40.0

    def __post_init__(self):
        object.__setattr__(self, "kind", NoiseKind(self.kind))
        if self.kind is NoiseKind.TWO_POINT:
            if self.p is None or not 0.0 < self.p < 1.0:
                raise ValueError("two-point law needs 0 < p < 1")
        elif self.p is not None:
            raise ValueError(f"{self.kind.value} takes no p")
        if self.kind is NoiseKind.TRUNCATED_EXP:
            if self.shape is None or not self.shape > 0:
                raise ValueError("truncated law needs shape > 0")
            if not self.cutoff > 1:
                raise ValueError("cutoff must exceed 1")
        elif self.shape is not None:
            raise ValueError(f"{self.kind.value} takes no shape")
        self._validate()

    # constructors
    @classmethod
    def gaussian(cls):
        return cls(NoiseKind.GAUSSIAN)

    @classmethod
    def rademacher(cls):
        return cls(NoiseKind.RADEMACHER)

    @classmethod
    def uniform(cls):
        return cls(NoiseKind.UNIFORM)

    @classmethod
    def two_point(cls, p):
        return cls(NoiseKind.TWO_POINT, p=float(p))

    @classmethod
    def truncated_exp(cls, shape, cutoff=40.0):
        return cls(NoiseKind.TRUNCATED_EXP, shape=float(shape), cutoff=float(cutoff))

    # scalar characteristics
    @property
    def alpha(self):
        if self.kind is NoiseKind.GAUSSIAN:
            return 2.0
        if self.kind is NoiseKind.TRUNCATED_EXP:
            return self.shape
        return BOUNDED_ALPHA

    @property
    def beta(self):
        return tail_beta(self.alpha)

    @property
    def is_discrete(self):
        return self.kind in (NoiseKind.RADEMACHER, NoiseKind.TWO_POINT)

    @property
    def is_symmetric(self):
        return not (self.kind is NoiseKind.TWO_POINT and self.p != 0.5)

    @property
    def scale(self):
        """s for the truncated law (1 otherwise)."""
        if self.kind is not NoiseKind.TRUNCATED_EXP:
            return 1.0
        a, y = self.shape, self.cutoff
        ratio = math.exp(special.gammaln(3 / a) - special.gammaln(1 / a))
        ratio *= special.gammainc(3 / a, y) / special.gammainc(1 / a, y)
        return 1.0 / math.sqrt(ratio)

    @property
    def radius(self):
        """sup |a| over the support."""
        if self.kind is NoiseKind.GAUSSIAN:
            return math.inf
        if self.kind is NoiseKind.RADEMACHER:
            return 1.0
        if self.kind is NoiseKind.UNIFORM:
            return SQRT3
        if self.kind is NoiseKind.TWO_POINT:
            return float(np.max(np.abs(self.atoms()[0])))
        return self.scale * self.cutoff ** (1.0 / self.shape)

    @property
    def tail_c(self):
        if self.kind is NoiseKind.GAUSSIAN:
            return 0.5
        if self.kind is NoiseKind.TRUNCATED_EXP:
            return 0.5 / self.scale ** self.shape
        return 1.0

    @property
    def log_tail_C(self):
        if self.kind in (NoiseKind.GAUSSIAN, NoiseKind.TRUNCATED_EXP):
            return math.log(2.0)
        return self.radius ** BOUNDED_ALPHA

    @property
    def tail_C(self):
        return math.exp(min(self.log_tail_C, 700.0))

    def atoms(self):
        """(values, probabilities) for discrete laws."""
        if self.kind is NoiseKind.RADEMACHER:
            return np.array([-1.0, 1.0]), np.array([0.5, 0.5])
        if self.kind is NoiseKind.TWO_POINT:
            p = self.p
            return (np.array([-math.sqrt(p / (1 - p)), math.sqrt((1 - p) / p)]),
                    np.array([1 - p, p]))
        raise TypeError(f"{self.kind.value} is not discrete")

    # densities and distribution functions
    def abs_pdf(self, y):
        """Density of |a| on y >= 0 (continuous symmetric laws)."""
        y = np.asarray(y, dtype=float)
        if self.kind is NoiseKind.GAUSSIAN:
            return np.where(y >= 0, 2 * np.exp(-0.5 * y * y) / math.sqrt(2 * math.pi), 0.0)
        if self.kind is NoiseKind.UNIFORM:
            return np.where((y >= 0) & (y <= SQRT3), 1 / SQRT3, 0.0)
        if self.kind is NoiseKind.TRUNCATED_EXP:
            s, a = self.scale, self.shape
            norm = s * math.gamma(1 + 1 / a) * special.gammainc(1 / a, self.cutoff)
            r = np.abs(y / s) ** a
            return np.where((y >= 0) & (r <= self.cutoff), np.exp(-r) / norm, 0.0)
        raise TypeError(f"{self.kind.value} has no density")

    def pdf(self, x):
        return 0.5 * self.abs_pdf(np.abs(np.asarray(x, dtype=float)))

    def cdf(self, x):
        """P(a <= x)."""
        x = np.asarray(x, dtype=float)
        if self.is_discrete:
            vals, probs = self.atoms()
            return (x[..., None] >= vals).astype(float) @ probs
        if self.kind is NoiseKind.GAUSSIAN:
            return special.ndtr(x)
        if self.kind is NoiseKind.UNIFORM:
            return np.clip((x + SQRT3) / (2 * SQRT3), 0.0, 1.0)
        s, a = self.scale, self.shape
        r = np.minimum(np.abs(x / s) ** a, self.cutoff)
        half = 0.5 * special.gammainc(1 / a, r) / special.gammainc(1 / a, self.cutoff)
        return 0.5 + np.sign(x) * half

    def cdf_left(self, x):
        """P(a < x)."""
        x = np.asarray(x, dtype=float)
        if self.is_discrete:
            vals, probs = self.atoms()
            return (x[..., None] > vals).astype(float) @ probs
        return self.cdf(x)

    def tail_prob(self, t):
        """P(|a| >= t)."""
        t = np.asarray(t, dtype=float)
        if self.is_discrete:
            vals, probs = self.atoms()
            return (np.abs(vals) >= t[..., None]).astype(float) @ probs
        return np.where(t <= 0, 1.0, 1.0 - self.cdf_left(t) + self.cdf(-t))

    # transforms
    def log_laplace(self, lam):
        """log E exp(lam * a), vectorised."""
        lam = np.asarray(lam, dtype=float)
        if self.kind is NoiseKind.GAUSSIAN:
            return 0.5 * lam * lam
        if self.kind is NoiseKind.RADEMACHER:
            y = np.abs(lam)
            return y + np.log1p(np.exp(-2 * y)) - math.log(2.0)
        if self.kind is NoiseKind.TWO_POINT:
            vals, probs = self.atoms()
            return np.logaddexp(lam * vals[0] + math.log(probs[0]), lam * vals[1] + math.log(probs[1]))
        if self.kind is NoiseKind.UNIFORM:
            y = np.abs(lam) * SQRT3
            small = y < 1e-3
            ys = np.where(small, 1.0, y)
            big = ys + np.log1p(-np.exp(-2 * ys)) - np.log(2 * ys)
            return np.where(small, y * y / 6 - y ** 4 / 180, big)
        return self._log_laplace_quad(lam)

    def _log_laplace_quad(self, lam):
        x, w = _composite_gl(-self.radius, self.radius, 64, 32)
        logf = np.log(np.maximum(self.pdf(x), 1e-300)) + np.log(w)
        e = lam[..., None] * x + logf
        return special.logsumexp(e, axis=-1)

    def laplace(self, lam):
        """E exp(lam * a); raises OverflowError instead of returning inf."""
        out = np.exp(self.log_laplace(lam))
        if not np.all(np.isfinite(out)):
            raise OverflowError("Laplace transform overflows double precision")
        return out

    # sampling
    def sample(self, rng, size=None):
        if self.kind is NoiseKind.GAUSSIAN:
            return rng.standard_normal(size)
        if self.kind is NoiseKind.RADEMACHER:
            return np.where(rng.random(size) < 0.5, -1.0, 1.0)
        if self.kind is NoiseKind.UNIFORM:
            return SQRT3 * (2 * rng.random(size) - 1)
        if self.kind is NoiseKind.TWO_POINT:
            vals, _ = self.atoms()
            return np.where(rng.random(size) < self.p, vals[1], vals[0])
        sign = np.where(rng.random(size) < 0.5, -1.0, 1.0)
        return sign * self.sample_abs(rng, size)

    def sample_abs(self, rng, size=None):
        """Draw |a| (continuous symmetric laws)."""
        if self.kind is NoiseKind.GAUSSIAN:
            return np.abs(rng.standard_normal(size))
        if self.kind is NoiseKind.UNIFORM:
            return SQRT3 * rng.random(size)
        if self.kind is NoiseKind.TRUNCATED_EXP:
            a = 1 / self.shape
            g = special.gammaincinv(a, rng.random(size) * special.gammainc(a, self.cutoff))
            return self.scale * g ** (1 / self.shape)
        raise TypeError(f"{self.kind.value} is not continuous")

    def sample_abs_sizebiased(self, rng, size=None):
        """Draw from y dP(|a| = y) / E|a|."""
        if self.kind is NoiseKind.GAUSSIAN:
            return np.sqrt(-2 * np.log1p(-rng.random(size)))
        if self.kind is NoiseKind.UNIFORM:
            return SQRT3 * np.sqrt(rng.random(size))
        if self.kind is NoiseKind.TRUNCATED_EXP:
            a = 2 / self.shape
            g = special.gammaincinv(a, rng.random(size) * special.gammainc(a, self.cutoff))
            return self.scale * g ** (1 / self.shape)
        raise TypeError(f"{self.kind.value} is not continuous")

    # moments by quadrature, independent of the closed forms above
    def moments(self):
        """(mean, variance, E|a|) by direct summation or adaptive quadrature."""
        if self.is_discrete:
            vals, probs = self.atoms()
            m = float(vals @ probs)
            return m, float((vals - m) ** 2 @ probs), float(np.abs(vals) @ probs)
        lim = min(self.radius, 40.0) if self.kind is NoiseKind.GAUSSIAN else self.radius
        f = lambda x: float(self.pdf(x))
        pts = [0.0] + [sgn * lim * 2.0 ** -j for j in range(1, 8) for sgn in (-1, 1)]
        m0 = integrate.quad(f, -lim, lim, points=pts, limit=200)[0]
        m1 = integrate.quad(lambda x: x * f(x), -lim, lim, points=pts, limit=200)[0]
        m2 = integrate.quad(lambda x: x * x * f(x), -lim, lim, points=pts, limit=200)[0]
        ma = 2 * integrate.quad(lambda x: x * f(x), 0.0, lim, points=pts[2::2], limit=200)[0]
        return m1 / m0, m2 / m0 - (m1 / m0) ** 2, ma / m0

    def _validate(self):
        key = (self.kind, self.p, self.shape, self.cutoff)
        if key in _VALIDATED:
            return
        mean, var, _ = self.moments()
        if abs(mean) > 1e-10 or abs(var - 1) > 1e-10:
            raise ValueError(f"law is not centered with unit variance (mean={mean}, var={var})")
        t = np.arange(1.0, 11.0)
        bound = self.log_tail_C - self.tail_c * t ** self.alpha
        with np.errstate(divide="ignore"):
            lhs = np.log(self.tail_prob(t))
        if np.any(lhs > bound + 1e-9):
            raise ValueError("stored tail constants do not bound the tail")
        _VALIDATED.add(key)

    # serialisation
    def to_json(self):
        params = {}
        if self.p is not None:
            params["p"] = self.p
        if self.shape is not None:
            params["shape"] = self.shape
            params["cutoff"] = self.cutoff
        return {"kind": self.kind.value, "params": params, "alpha": self.alpha}

    @classmethod
    def from_json(cls, obj):
        if isinstance(obj, str):
            obj = json.loads(obj)
        kind = NoiseKind(obj["kind"])
        params = dict(obj.get("params", {}))
        spec = cls(kind, **params)
        if "alpha" in obj and not math.isclose(float(obj["alpha"]), spec.alpha):
            raise ValueError("alpha in record disagrees with the law")
        return spec

    def __str__(self):
        extra = ""
        if self.p is not None:
            extra = f"(p={self.p:g})"
        elif self.shape is not None:
            extra = f"(shape={self.shape:g})"
        return self.kind.value + extra


def _composite_gl(a, b, panels, order):
    x0, w0 = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(a, b, panels + 1)
    h = np.diff(edges) / 2
    mid = (edges[:-1] + edges[1:]) / 2
    x = (mid[:, None] + h[:, None] * x0).ravel()
    w = (h[:, None] * w0).ravel()
    return x, w


def ks_distance(samples, spec):
    """Sup distance between the empirical cdf of samples and the law's cdf."""
    x = np.sort(np.asarray(samples, dtype=float))
    pts = np.unique(x)
    if spec.is_discrete:
        pts = np.union1d(pts, spec.atoms()[0])
    n = x.size
    f_right = np.searchsorted(x, pts, side="right") / n
    f_left = np.searchsorted(x, pts, side="left") / n
    d1 = np.abs(f_right - spec.cdf(pts))
    d2 = np.abs(f_left - spec.cdf_left(pts))
    return float(max(d1.max(), d2.max()))


def parse_spec(text):
    """Parse 'gaussian', 'two_point:0.3', 'truncated_exp:1' or a JSON record."""
    text = text.strip()
    if text.startswith("{"):
        return NoiseSpec.from_json(text)
    name, _, arg = text.partition(":")
    kind = NoiseKind(name)
    if kind is NoiseKind.TWO_POINT:
        return NoiseSpec.two_point(float(arg))
    if kind is NoiseKind.TRUNCATED_EXP:
        return NoiseSpec.truncated_exp(float(arg) if arg else 1.0)
    if arg:
        raise ValueError(f"{name} takes no parameter")
    return NoiseSpec(kind)
