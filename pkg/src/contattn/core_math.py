"""Special functions, quadrature and root finding shared by every other module.

Everything here is pure and works on floats; ``erf`` and ``gaussian_pdf`` also
broadcast over numpy arrays since the angular integrals in 2D need them
vectorized.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, optimize, special

from .errors import NoBracket, NotSPD, ToleranceNotReached

SQRT2 = math.sqrt(2.0)
SQRT2PI = math.sqrt(2.0 * math.pi)
BETA_ONE_TOL = 1e-12


@dataclass(frozen=True)
class QuadratureSpec:
    absolute_tolerance: float = 1e-10
    max_subdivisions: int = 40
    fixed_node_count: int = 64

    def __post_init__(self):
        if not self.absolute_tolerance > 0:
            raise ValueError("absolute_tolerance must be positive")
        if self.max_subdivisions < 1:
            raise ValueError("max_subdivisions must be >= 1")
        if self.fixed_node_count < 2:
            raise ValueError("fixed_node_count must be >= 2")


@dataclass(frozen=True)
class RootSpec:
    tolerance: float = 1e-12
    max_iterations: int = 200

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")


DEFAULT_QUAD = QuadratureSpec()
DEFAULT_ROOT = RootSpec()


# --------------------------------------------------------------------------
# special functions

def erf(x):
    """Error function; scalars in, float out, arrays in, arrays out."""
    out = special.erf(x)
    return float(out) if np.ndim(out) == 0 else out


def erf_diff(u, v):
    """``erf(v) - erf(u)`` evaluated as a difference before any scaling.

    When both arguments sit in the same tail the complementary function is
    used so that far-from-support basis functions still get a tiny positive
    mass instead of an exact 0 from cancellation.
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    plain = special.erf(v) - special.erf(u)
    upper = special.erfc(u) - special.erfc(v)
    lower = special.erfc(-v) - special.erfc(-u)
    out = np.where((u > 1.0) & (v > 1.0), upper, np.where((u < -1.0) & (v < -1.0), lower, plain))
    return float(out) if out.ndim == 0 else out


def gamma_fn(x: float) -> float:
    if not x > 0:
        raise ValueError(f"gamma_fn is only defined here for x > 0, got {x}")
    return math.gamma(x)


def std_normal_pdf(x):
    x = np.asarray(x, dtype=float)
    out = np.exp(-0.5 * x * x) / SQRT2PI
    return float(out) if out.ndim == 0 else out


def _as_cov(cov, dim):
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    if cov.shape != (dim, dim):
        raise ValueError(f"covariance shape {cov.shape} does not match dimension {dim}")
    return cov


def cholesky_spd(cov) -> np.ndarray:
    """Lower Cholesky factor; raises NotSPD on asymmetric or indefinite input."""
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    if cov.shape[0] != cov.shape[1]:
        raise NotSPD(f"covariance must be square, got {cov.shape}")
    if not np.all(np.isfinite(cov)):
        raise NotSPD("covariance has non-finite entries")
    if not np.allclose(cov, cov.T, rtol=1e-10, atol=1e-14):
        raise NotSPD("covariance is not symmetric")
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise NotSPD("covariance is not positive definite") from exc


def sqrtm_spd(cov) -> np.ndarray:
    """Symmetric (spectral) square root of an SPD matrix."""
    cholesky_spd(cov)
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    w, v = np.linalg.eigh(0.5 * (cov + cov.T))
    return (v * np.sqrt(w)) @ v.T


def gaussian_pdf(t, mean, cov):
    """Multivariate normal density N(t; mean, cov).

    ``t`` may carry leading batch axes: shape (..., D). In 1D scalars are
    accepted for all three arguments.
    """
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    dim = mean.shape[0]
    cov = _as_cov(cov, dim)
    chol = cholesky_spd(cov)
    t = np.asarray(t, dtype=float)
    scalar_in = t.ndim == 0 or (dim > 1 and t.ndim == 1)
    if dim == 1 and t.ndim >= 0:
        t = t[..., None]
    diff = t - mean
    flat = diff.reshape(-1, dim)
    z = np.linalg.solve(chol, flat.T)  # triangular system, small D
    quad = np.sum(z * z, axis=0).reshape(diff.shape[:-1])
    log_norm = 0.5 * dim * math.log(2.0 * math.pi) + np.sum(np.log(np.diag(chol)))
    out = np.exp(-0.5 * quad - log_norm)
    if scalar_in or out.ndim == 0:
        return float(out)
    return out


def beta_exp(u: float, beta: float) -> float:
    if abs(beta - 1.0) < BETA_ONE_TOL:
        return math.exp(u)
    base = 1.0 + (1.0 - beta) * u
    if base <= 0.0:
        # beta < 1: [.]_+ clips to zero. beta > 1: u has reached the pole at
        # 1/(beta - 1) where the function diverges; report +inf past it.
        return 0.0 if beta < 1.0 else math.inf
    return base ** (1.0 / (1.0 - beta))


def beta_log(u: float, beta: float) -> float:
    if not u > 0:
        raise ValueError(f"beta_log needs u > 0, got {u}")
    if abs(beta - 1.0) < BETA_ONE_TOL:
        return math.log(u)
    return (u ** (1.0 - beta) - 1.0) / (1.0 - beta)


# --------------------------------------------------------------------------
# quadrature

def integrate_adaptive(
    f: Callable[[float], float],
    a: float,
    b: float,
    spec: QuadratureSpec = DEFAULT_QUAD,
    points: Sequence[float] | None = None,
) -> float:
    """Globally adaptive Gauss-Kronrod quadrature of ``f`` over [a, b].

    ``points`` lists interior kinks (support endpoints of clipped densities,
    centres of narrow bumps); each becomes a forced subdivision point.
    """
    if a > b:
        raise ValueError("integrate_adaptive needs a <= b")
    if a == b:
        return 0.0
    inner = sorted({float(p) for p in (points or ()) if a < p < b})
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        res = integrate.quad(
            f,
            a,
            b,
            epsabs=spec.absolute_tolerance,
            epsrel=0.0,
            limit=max(spec.max_subdivisions, len(inner) + 1),
            points=inner or None,
            full_output=1,
        )
    value, err = res[0], res[1]
    if len(res) > 3 and err > spec.absolute_tolerance:
        raise ToleranceNotReached(
            f"adaptive quadrature on [{a}, {b}] stopped at error estimate {err:.3e}: {res[3]}"
        )
    return float(value)


def gauss_legendre(n: int, a: float, b: float):
    x, w = np.polynomial.legendre.leggauss(n)
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), half * w


def integrate_fixed_2d(f, domain, nodes_per_axis: int = 64) -> float:
    """Tensor-product Gauss-Legendre rule on an axis-aligned rectangle.

    ``domain`` is ((x0, x1), (y0, y1)); ``f`` receives arrays X, Y of equal
    shape and must return an array of that shape.
    """
    if nodes_per_axis < 8:
        raise ValueError("nodes_per_axis must be >= 8")
    (x0, x1), (y0, y1) = domain
    xs, wx = gauss_legendre(nodes_per_axis, x0, x1)
    ys, wy = gauss_legendre(nodes_per_axis, y0, y1)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    vals = np.asarray(f(X, Y), dtype=float)
    return float(wx @ vals @ wy)


def ellipse_rule(center, shape_matrix, nodes_per_axis: int = 256):
    """Nodes (n*n, 2) and weights (n*n,) for the filled ellipse
    {x : (x-c)^T Q^{-1} (x-c) <= 1}.

    Works chord by chord in the eigenframe of Q. Both the outer coordinate and
    each chord are mapped through a cosine substitution so the square-root
    behaviour at the rim disappears and a fixed Gauss-Legendre rule converges
    quickly for integrands that are smooth inside the ellipse.
    """
    center = np.asarray(center, dtype=float)
    Q = np.asarray(shape_matrix, dtype=float)
    cholesky_spd(Q)
    w, V = np.linalg.eigh(0.5 * (Q + Q.T))
    ra, rb = np.sqrt(w)
    # outer: x' = ra cos(u), u in (0, pi); inner: y' = h(u) cos(v), h = rb sin(u)
    u, wu = gauss_legendre(nodes_per_axis, 0.0, math.pi)
    v, wv = gauss_legendre(nodes_per_axis, 0.0, math.pi)
    U, Vv = np.meshgrid(u, v, indexing="ij")
    xp = ra * np.cos(U)
    h = rb * np.sin(U)
    yp = h * np.cos(Vv)
    jac = ra * np.sin(U) * h * np.sin(Vv)
    X = center[0] + V[0, 0] * xp + V[0, 1] * yp
    Y = center[1] + V[1, 0] * xp + V[1, 1] * yp
    W = np.outer(wu, wv) * jac
    return np.stack([X, Y], axis=-1).reshape(-1, 2), W.ravel()


def integrate_ellipse_2d(f, center, shape_matrix, nodes_per_axis: int = 256) -> float:
    """Integrate ``f(X, Y)`` over a filled ellipse with :func:`ellipse_rule`."""
    pts, w = ellipse_rule(center, shape_matrix, nodes_per_axis)
    vals = np.asarray(f(pts[:, 0], pts[:, 1]), dtype=float)
    return float(vals @ w)


# --------------------------------------------------------------------------
# root finding

def bisect(f: Callable[[float], float], lo: float, hi: float, spec: RootSpec = DEFAULT_ROOT) -> float:
    """Bracketed root of ``f`` on [lo, hi] (Brent's method, bisection-safe)."""
    flo, fhi = f(lo), f(hi)
    if flo == 0.0:
        return float(lo)
    if fhi == 0.0:
        return float(hi)
    if flo * fhi > 0:
        raise NoBracket(f"f({lo})={flo:.3e} and f({hi})={fhi:.3e} have the same sign")
    try:
        root, info = optimize.brentq(
            f, lo, hi, xtol=spec.tolerance, rtol=4 * np.finfo(float).eps,
            maxiter=spec.max_iterations, full_output=True, disp=False,
        )
    except RuntimeError as exc:
        raise ToleranceNotReached(str(exc)) from exc
    if not info.converged:
        raise ToleranceNotReached(f"root search did not converge: {info.flag}")
    return float(root)


# --------------------------------------------------------------------------
# truncated standard-normal moments

def normal_interval_moments(u, v, order: int):
    """Moments ``∫_u^v s^k N(s; 0, 1) ds`` for k = 0..order.

    Returned as an array of shape (order + 1, *broadcast(u, v).shape). Uses the
    integration-by-parts recursion I_k = (k-1) I_{k-2} - [s^{k-1} N(s)]_u^v.
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    u, v = np.broadcast_arrays(u, v)
    nu, nv = std_normal_pdf(u), std_normal_pdf(v)
    out = np.empty((order + 1,) + u.shape)
    out[0] = 0.5 * np.asarray(erf_diff(u / SQRT2, v / SQRT2))
    if order >= 1:
        out[1] = nu - nv
    upow, vpow = np.ones_like(u), np.ones_like(v)
    for k in range(2, order + 1):
        upow = upow * u
        vpow = vpow * v
        out[k] = (k - 1) * out[k - 2] - (vpow * nv - upow * nu)
    return out
