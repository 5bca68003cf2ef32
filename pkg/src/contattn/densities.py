"""Sparse density families with analytic normalizers, escorts and entropies.

Every family here is the maximizer of ``E_p[f] - Omega_alpha(p)`` for a
particular score ``f``: Gaussians for alpha = 1 and the clipped ``[f - lambda]_+``
shapes (truncated parabola / paraboloid, triangular, location-scale) for
alpha = 2. Each constructed density stores its normalizer ``lam`` and exposes
its exact support, so quadrature callers can split at the kinks.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import optimize

from . import core_math as cm
from .errors import InfiniteSupport, NoBracket, NotSPD

MIN_SIGMA2 = 1e-12
MIN_EIG = 1e-10
GAUSS_WINDOW = 10.0  # integration half-width in standard deviations


class Family(str, enum.Enum):
    GAUSSIAN_1D = "gaussian1d"
    GAUSSIAN_2D = "gaussian2d"
    TRUNCATED_PARABOLA = "truncated_parabola"
    TRUNCATED_PARABOLOID_2D = "truncated_paraboloid2d"
    TRIANGULAR = "triangular"
    LOCATION_SCALE = "location_scale"


SPARSE_FAMILIES = {
    Family.TRUNCATED_PARABOLA,
    Family.TRUNCATED_PARABOLOID_2D,
    Family.TRIANGULAR,
    Family.LOCATION_SCALE,
}


@dataclass(frozen=True, eq=False)
class Ellipse:
    """Filled ellipse {t : (t - center)^T Q^{-1} (t - center) <= 1}."""

    center: np.ndarray
    shape_matrix: np.ndarray

    @property
    def area(self) -> float:
        return math.pi * math.sqrt(np.linalg.det(self.shape_matrix))

    def contains(self, t) -> np.ndarray:
        d = np.asarray(t, dtype=float) - self.center
        m = np.einsum("...i,ij,...j->...", d, np.linalg.inv(self.shape_matrix), d)
        return m <= 1.0

    def bounding_box(self):
        half = np.sqrt(np.diag(self.shape_matrix))
        return tuple((float(c - h), float(c + h)) for c, h in zip(self.center, half))


# --------------------------------------------------------------------------
# canonical parameters of the quadratic score theta^T [t, vec(t t^T)]

def _check_sigma2(sigma2):
    if not sigma2 > MIN_SIGMA2:
        raise ValueError(f"variance must exceed {MIN_SIGMA2}, got {sigma2}")


def _check_cov(cov) -> np.ndarray:
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    cm.cholesky_spd(cov)
    if np.linalg.eigvalsh(cov).min() < MIN_EIG:
        raise NotSPD(f"covariance is degenerate (min eigenvalue < {MIN_EIG})")
    return cov


@dataclass(frozen=True)
class CanonicalScore1D:
    theta1: float
    theta2: float

    def __post_init__(self):
        if not self.theta2 < 0:
            raise ValueError(f"theta2 must be negative, got {self.theta2}")

    @classmethod
    def from_moments(cls, mu: float, sigma2: float) -> "CanonicalScore1D":
        _check_sigma2(sigma2)
        return cls(mu / sigma2, -0.5 / sigma2)

    @property
    def sigma2(self) -> float:
        return -0.5 / self.theta2

    @property
    def mu(self) -> float:
        return self.theta1 * self.sigma2

    def as_vector(self) -> np.ndarray:
        return np.array([self.theta1, self.theta2])

    @classmethod
    def from_vector(cls, v) -> "CanonicalScore1D":
        return cls(float(v[0]), float(v[1]))

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return self.theta1 * t + self.theta2 * t * t


@dataclass(frozen=True, eq=False)
class CanonicalScore2D:
    theta_lin: np.ndarray
    theta_quad: np.ndarray

    def __post_init__(self):
        lin = np.asarray(self.theta_lin, dtype=float).reshape(2)
        quad = np.asarray(self.theta_quad, dtype=float).reshape(2, 2)
        if abs(quad[0, 1] - quad[1, 0]) > 1e-12 * max(1.0, np.abs(quad).max()):
            raise ValueError("theta_quad must be symmetric")
        quad = 0.5 * (quad + quad.T)
        try:
            cm.cholesky_spd(-quad)
        except NotSPD as exc:
            raise NotSPD("-theta_quad must be positive definite") from exc
        object.__setattr__(self, "theta_lin", lin)
        object.__setattr__(self, "theta_quad", quad)

    @classmethod
    def from_moments(cls, mu, cov) -> "CanonicalScore2D":
        cov = _check_cov(cov)
        prec = np.linalg.inv(cov)
        prec = 0.5 * (prec + prec.T)
        return cls(prec @ np.asarray(mu, dtype=float), -0.5 * prec)

    @property
    def cov(self) -> np.ndarray:
        c = np.linalg.inv(-2.0 * self.theta_quad)
        return 0.5 * (c + c.T)

    @property
    def mu(self) -> np.ndarray:
        return self.cov @ self.theta_lin

    def as_vector(self) -> np.ndarray:
        """Six raw entries: theta_lin (2) then theta_quad row-major (4)."""
        return np.concatenate([self.theta_lin, self.theta_quad.ravel()])

    @classmethod
    def from_vector(cls, v) -> "CanonicalScore2D":
        v = np.asarray(v, dtype=float)
        return cls(v[:2], v[2:].reshape(2, 2))

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return t @ self.theta_lin + np.einsum("...i,ij,...j->...", t, self.theta_quad, t)


# --------------------------------------------------------------------------
# densities

@dataclass(frozen=True, eq=False)
class SparseDensity:
    family: Family
    location: float | np.ndarray
    scale: float | np.ndarray
    lam: float
    support: tuple | Ellipse | None
    g: "LocationScaleG | None" = None

    @property
    def alpha(self) -> int:
        return 2 if self.family in SPARSE_FAMILIES else 1

    @property
    def dim(self) -> int:
        return 2 if self.family in (Family.GAUSSIAN_2D, Family.TRUNCATED_PARABOLOID_2D) else 1

    @property
    def is_sparse(self) -> bool:
        return self.family in SPARSE_FAMILIES

    def support_measure(self) -> float:
        if self.support is None:
            return math.inf
        if isinstance(self.support, Ellipse):
            return self.support.area
        lo, hi = self.support
        return hi - lo

    def kinks(self) -> list[float]:
        """Non-smooth points of the 1D density (support ends and |t - mu| apex)."""
        if self.dim != 1 or self.support is None:
            return []
        pts = list(self.support)
        if self.family in (Family.TRIANGULAR, Family.LOCATION_SCALE):
            pts.append(float(self.location))
        return pts

    def integration_window(self):
        """Support, or a +-10 std window for Gaussians (tail mass < 1e-22)."""
        if self.support is not None:
            return self.support
        if self.family is Family.GAUSSIAN_1D:
            s = math.sqrt(self.scale)
            return (self.location - GAUSS_WINDOW * s, self.location + GAUSS_WINDOW * s)
        return Ellipse(np.asarray(self.location), GAUSS_WINDOW**2 * np.asarray(self.scale))

    def pdf(self, t):
        fam = self.family
        if fam is Family.GAUSSIAN_1D or fam is Family.GAUSSIAN_2D:
            return cm.gaussian_pdf(t, self.location, self.scale)
        t = np.asarray(t, dtype=float)
        if fam is Family.TRUNCATED_PARABOLOID_2D:
            d = t - self.location
            prec = np.linalg.inv(self.scale)
            raw = -self.lam - 0.5 * np.einsum("...i,ij,...j->...", d, prec, d)
            inside = self.support.contains(t)
        else:
            d = np.abs(t - self.location)
            if fam is Family.TRUNCATED_PARABOLA:
                raw = -self.lam - d * d / (2.0 * self.scale)
            elif fam is Family.TRIANGULAR:
                raw = -self.lam - d / self.scale
            else:
                raw = -self.lam - self.g.g_prime(d / self.scale) / self.scale
            lo, hi = self.support
            inside = (t >= lo) & (t <= hi)
        out = np.where(inside, np.maximum(raw, 0.0), 0.0)
        return float(out) if out.ndim == 0 else out

    __call__ = pdf


def integrate_density(p: SparseDensity, h: Callable, spec=cm.DEFAULT_QUAD,
                      points=(), nodes_per_axis: int = 256) -> float:
    """``∫ h(t)`` over the support (or Gaussian window) of ``p``.

    1D: adaptive quadrature split at every kink of ``p`` plus ``points``.
    2D: fixed chord-wise rule over the support ellipse; ``h`` takes (X, Y).
    """
    window = p.integration_window()
    if isinstance(window, Ellipse):
        return cm.integrate_ellipse_2d(h, window.center, window.shape_matrix, nodes_per_axis)
    lo, hi = window
    return cm.integrate_adaptive(h, lo, hi, spec, points=list(p.kinks()) + list(points))


def make_gaussian_1d(mu: float, sigma2: float) -> SparseDensity:
    _check_sigma2(sigma2)
    log_partition = 0.5 * math.log(2.0 * math.pi * sigma2)
    return SparseDensity(Family.GAUSSIAN_1D, float(mu), float(sigma2), log_partition, None)


def make_gaussian_2d(mu, cov) -> SparseDensity:
    cov = _check_cov(cov)
    log_partition = 0.5 * math.log(np.linalg.det(2.0 * math.pi * cov))
    return SparseDensity(Family.GAUSSIAN_2D, np.asarray(mu, dtype=float), cov, log_partition, None)


def truncated_parabola_lambda(sigma2: float) -> float:
    return -0.5 * (3.0 / (2.0 * math.sqrt(sigma2))) ** (2.0 / 3.0)


def paraboloid_lambda(cov) -> float:
    """Normalizer of the N-dimensional truncated paraboloid, N = cov.shape[0]."""
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    n = cov.shape[0]
    vol = math.sqrt(np.linalg.det(2.0 * math.pi * cov))
    return -((cm.gamma_fn(n / 2.0 + 2.0) / vol) ** (2.0 / (2.0 + n)))


def make_truncated_parabola(mu: float, sigma2: float) -> SparseDensity:
    _check_sigma2(sigma2)
    lam = truncated_parabola_lambda(sigma2)
    a = (1.5 * sigma2) ** (1.0 / 3.0)
    return SparseDensity(Family.TRUNCATED_PARABOLA, float(mu), float(sigma2), lam, (mu - a, mu + a))


def make_truncated_paraboloid(mu, cov) -> SparseDensity:
    cov = _check_cov(cov)
    mu = np.asarray(mu, dtype=float)
    if cov.shape != (2, 2) or mu.shape != (2,):
        raise ValueError("truncated paraboloid is exposed for D = 2 only")
    lam = paraboloid_lambda(cov)
    support = Ellipse(mu, -2.0 * lam * cov)
    return SparseDensity(Family.TRUNCATED_PARABOLOID_2D, mu, cov, lam, support)


def make_triangular(mu: float, b: float) -> SparseDensity:
    if not b > MIN_SIGMA2:
        raise ValueError(f"triangular scale b must be positive, got {b}")
    half = math.sqrt(b)
    return SparseDensity(Family.TRIANGULAR, float(mu), float(b), -1.0 / half, (mu - half, mu + half))


@dataclass(frozen=True, eq=False)
class LocationScaleG:
    """Convex generator g with derivative g'; caches the half-width a*.

    a* solves a g'(a) - g(a) + g(0) = 1/2 (the unit-scale support half-width).
    """

    g: Callable[[float], float]
    g_prime: Callable[[float], float]
    strong_convexity_hint: float | None = None
    a_star: float = field(init=False)

    def __post_init__(self):
        g, gp = self.g, self.g_prime

        def excess(a):
            return a * gp(a) - g(a) + g(0.0) - 0.5

        hi = 1.0
        while excess(hi) < 0:
            hi *= 2.0
            if hi > 2.0**30:
                raise NoBracket("a g'(a) - g(a) + g(0) never reaches 1/2; g is not convex enough")
        a = cm.bisect(excess, 0.0, hi)
        grid = np.linspace(0.0, 2.0 * a, 64)
        slopes = np.array([gp(s) for s in grid])
        if np.any(np.diff(slopes) < -1e-12 * (1.0 + np.abs(slopes[:-1]))):
            raise ValueError("g' is not nondecreasing; g must be convex")
        object.__setattr__(self, "a_star", a)


# Strictly convex generators with closed-form derivatives: name -> (g, g')
NAMED_GENERATORS = {
    "quadratic": (lambda u: 0.5 * u * u, lambda u: u),
    "quartic": (lambda u: 0.25 * u**4, lambda u: u**3),
    "cosh": (lambda u: np.cosh(u) - 1.0, lambda u: np.sinh(u)),
    "quadratic_quartic": (lambda u: 0.5 * u * u + 0.25 * u**4, lambda u: u + u**3),
    "cubic_linear": (lambda u: u**3 / 3.0 + u, lambda u: u * u + 1.0),
}


def make_location_scale(g: LocationScaleG, mu: float, sigma: float) -> SparseDensity:
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    a = g.a_star
    lam = -g.g_prime(a) / sigma
    return SparseDensity(Family.LOCATION_SCALE, float(mu), float(sigma), lam,
                         (mu - a * sigma, mu + a * sigma), g=g)


# --------------------------------------------------------------------------
# escort distributions and Tsallis entropies

def _gaussian_power_integral(p: SparseDensity, beta: float) -> float:
    # ∫ N(t; mu, S)^beta dt = (2 pi)^{D(1-beta)/2} det(S)^{(1-beta)/2} beta^{-D/2}
    D = p.dim
    det = p.scale if D == 1 else float(np.linalg.det(p.scale))
    return (2.0 * math.pi) ** (D * (1.0 - beta) / 2.0) * det ** ((1.0 - beta) / 2.0) * beta ** (-D / 2.0)


def escort(p, beta: float):
    """beta-escort of ``p``: returns (evaluator, ||p||_beta^beta).

    ``p`` may be a SparseDensity or a discrete probability vector; in the
    discrete case the "evaluator" is the escort probability vector itself.
    """
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    if not isinstance(p, SparseDensity):
        probs = np.asarray(p, dtype=float)
        powered = np.where(probs > 0, probs**beta, 0.0)
        norm = float(powered.sum())
        return powered / norm, norm

    if beta == 0 and not p.is_sparse:
        raise InfiniteSupport("the 0-escort of a full-support density does not exist")
    if beta == 1:
        norm = 1.0
    elif beta == 0:
        norm = p.support_measure()
    elif not p.is_sparse:
        norm = _gaussian_power_integral(p, beta)
    elif p.dim == 1:
        norm = integrate_density(p, lambda t: p.pdf(t) ** beta, cm.QuadratureSpec(1e-12, 200))
    else:
        norm = integrate_density(p, lambda X, Y: p.pdf(np.stack([X, Y], -1)) ** beta)

    def evaluate(t):
        val = np.asarray(p.pdf(t), dtype=float)
        out = np.where(val > 0, val ** beta, 0.0) / norm
        return float(out) if out.ndim == 0 else out

    return evaluate, norm


def tsallis_negentropy(p, alpha: float) -> float:
    """Omega_alpha(p); alpha = 1 is Shannon negentropy with 0 log 0 := 0."""
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    shannon = abs(alpha - 1.0) < cm.BETA_ONE_TOL

    def local(v):
        v = np.asarray(v, dtype=float)
        if shannon:
            return np.where(v > 0, v * np.log(np.where(v > 0, v, 1.0)), 0.0)
        return np.where(v > 0, v ** alpha, 0.0)

    if not isinstance(p, SparseDensity):
        total = float(np.sum(local(p)))
    elif p.dim == 1:
        total = integrate_density(p, lambda t: float(local(p.pdf(t))), cm.QuadratureSpec(1e-12, 200))
    else:
        total = integrate_density(p, lambda X, Y: local(p.pdf(np.stack([X, Y], -1))))
    if shannon:
        return total
    return (total - 1.0) / (alpha * (alpha - 1.0))


# --------------------------------------------------------------------------
# numeric normalizer (any alpha > 1)

def _grid_argmax(f, lo, hi):
    grid = np.linspace(lo, hi, 2001)
    vals = np.array([f(x) for x in grid])
    k = int(np.argmax(vals))
    a, b = grid[max(k - 1, 0)], grid[min(k + 1, len(grid) - 1)]
    res = optimize.minimize_scalar(lambda x: -f(x), bounds=(a, b), method="bounded",
                                   options={"xatol": 1e-12})
    return res.x if -res.fun >= vals[k] else grid[k]


def lambda_numeric_oracle(f: Callable[[float], float], alpha: float, bracket, argmax=None,
                          spec: cm.QuadratureSpec = cm.QuadratureSpec(1e-11, 200)):
    """Solve ∫ [(alpha-1)(f(t) - lam)]_+^{1/(alpha-1)} dt = 1 for lam numerically.

    ``bracket`` is the t-interval searched for the support; ``f`` must be
    unimodal there. Returns (lam, density evaluator).
    """
    if not alpha > 1:
        raise ValueError("the numeric normalizer needs alpha > 1")
    lo, hi = bracket
    t_star = _grid_argmax(f, lo, hi) if argmax is None else argmax
    f_max = f(t_star)
    expo = 1.0 / (alpha - 1.0)

    def density(t, lam):
        return max((alpha - 1.0) * (f(t) - lam), 0.0) ** expo

    def endpoints(lam):
        left = lo if f(lo) >= lam else cm.bisect(lambda x: f(x) - lam, lo, t_star)
        right = hi if f(hi) >= lam else cm.bisect(lambda x: f(x) - lam, t_star, hi)
        return left, right

    def mass_excess(lam):
        if lam >= f_max:
            return -1.0
        left, right = endpoints(lam)
        return cm.integrate_adaptive(lambda t: density(t, lam), left, right, spec, points=[t_star]) - 1.0

    lam = cm.bisect(mass_excess, f_max - 10.0 * (1.0 + abs(f_max)), f_max)
    return lam, np.vectorize(lambda t: density(t, lam), otypes=[float])


def lambda_numeric_oracle_2d(f, alpha: float, argmax, n_angles: int = 256, n_radial: int = 64):
    """2D numeric normalizer for a concave score with known maximizer.

    Integrates in polar coordinates around ``argmax``: per ray the support
    radius is found by vectorized bisection and the radial integral by a
    Gauss-Legendre rule; the periodic angular integral uses the trapezoid rule.
    ``f`` takes arrays (X, Y).
    """
    if not alpha > 1:
        raise ValueError("the numeric normalizer needs alpha > 1")
    c = np.asarray(argmax, dtype=float)
    f_max = float(f(c[0], c[1]))
    expo = 1.0 / (alpha - 1.0)
    phi = 2.0 * math.pi * np.arange(n_angles) / n_angles
    dx, dy = np.cos(phi), np.sin(phi)
    gx, gw = np.polynomial.legendre.leggauss(n_radial)

    def ray_radius(lam):
        lo = np.zeros(n_angles)
        hi = np.ones(n_angles)
        for _ in range(200):
            out = f(c[0] + hi * dx, c[1] + hi * dy) > lam
            if not out.any():
                break
            hi = np.where(out, 2.0 * hi, hi)
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            inside = f(c[0] + mid * dx, c[1] + mid * dy) > lam
            lo = np.where(inside, mid, lo)
            hi = np.where(inside, hi, mid)
        return 0.5 * (lo + hi)

    def mass_excess(lam):
        if lam >= f_max:
            return -1.0
        R = ray_radius(lam)
        r = 0.5 * R[:, None] * (gx[None, :] + 1.0)
        w = 0.5 * R[:, None] * gw[None, :]
        vals = np.maximum((alpha - 1.0) * (f(c[0] + r * dx[:, None], c[1] + r * dy[:, None]) - lam), 0.0)
        radial = np.sum(w * r * vals**expo, axis=1)
        return float(radial.sum() * 2.0 * math.pi / n_angles) - 1.0

    lam = cm.bisect(mass_excess, f_max - 10.0 * (1.0 + abs(f_max)), f_max)

    def density(X, Y):
        return np.maximum((alpha - 1.0) * (f(X, Y) - lam), 0.0) ** expo

    return lam, density


# --------------------------------------------------------------------------
# normalizing function A_alpha and its gradient (1D quadratic scores)

def a_alpha(score: CanonicalScore1D, alpha: int) -> float:
    """A_alpha(theta) for f_theta(t) = theta1 t + theta2 t^2, alpha in {1, 2}."""
    mu, s2 = score.mu, score.sigma2
    shift = mu * mu / (2.0 * s2)  # f_theta = -(t - mu)^2 / (2 s2) + shift
    if alpha == 1:
        return 0.5 * math.log(2.0 * math.pi * s2) + shift
    if alpha == 2:
        return truncated_parabola_lambda(s2) + shift + 1.0
    raise ValueError(f"unsupported alpha {alpha}; closed forms exist for 1 and 2")


def grad_a_alpha(score: CanonicalScore1D, alpha: int) -> np.ndarray:
    """Escort expectation of (t, t^2) under the (2 - alpha)-escort of p_theta."""
    mu, s2 = score.mu, score.sigma2
    if alpha == 1:
        return np.array([mu, s2 + mu * mu])
    if alpha == 2:
        # 0-escort is uniform on [mu - a, mu + a]
        a = (1.5 * s2) ** (1.0 / 3.0)
        return np.array([mu, mu * mu + a * a / 3.0])
    raise ValueError(f"unsupported alpha {alpha}; closed forms exist for 1 and 2")


def density_from_score(score, alpha: int) -> SparseDensity:
    """The alpha-entmax density of a quadratic canonical score (alpha in {1, 2})."""
    if isinstance(score, CanonicalScore1D):
        mu, var = score.mu, score.sigma2
        if alpha == 1:
            return make_gaussian_1d(mu, var)
        if alpha == 2:
            return make_truncated_parabola(mu, var)
    else:
        mu, var = score.mu, score.cov
        if alpha == 1:
            return make_gaussian_2d(mu, var)
        if alpha == 2:
            return make_truncated_paraboloid(mu, var)
    raise ValueError(f"unsupported alpha {alpha}")
