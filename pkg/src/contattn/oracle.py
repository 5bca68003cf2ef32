"""Slow, brute-force reference computations used to validate the closed forms.

Nothing here calls into the attention closed forms; only the core numerics
and the density constructors are shared.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from . import core_math as cm
from .densities import SparseDensity, density_from_score, integrate_density, CanonicalScore2D
from .discrete import SimplexVector
from .errors import InfiniteSupport, TooLarge

ORACLE_QUAD = cm.QuadratureSpec(absolute_tolerance=1e-13, max_subdivisions=400)
ORACLE_NODES_2D = 256


@dataclass(frozen=True)
class FiniteDiffSpec:
    step: float = 1e-6

    def __post_init__(self):
        if not self.step > 0:
            raise ValueError("step must be positive")


def _as_vec(x):
    return np.asarray(x, dtype=float).ravel()


def expectation_quadrature(p: SparseDensity, g, spec: cm.QuadratureSpec = ORACLE_QUAD,
                           points=(), nodes_per_axis: int = ORACLE_NODES_2D) -> float:
    """∫ p(t) g(t) dt. In 2D ``g`` receives points of shape (..., 2)."""
    if p.dim == 1:
        return integrate_density(p, lambda t: p.pdf(t) * g(t), spec, points=points)

    def h(X, Y):
        T = np.stack([X, Y], axis=-1)
        return p.pdf(T) * g(T)

    return integrate_density(p, h, nodes_per_axis=nodes_per_axis)


def generalized_cov_quadrature(p: SparseDensity, phi, psi, beta: float,
                               spec: cm.QuadratureSpec = ORACLE_QUAD, points=(),
                               nodes_per_axis: int = ORACLE_NODES_2D) -> np.ndarray:
    """||p||_beta^beta (E[phi psi^T] - E[phi] E[psi]^T) under the beta-escort.

    ``phi`` and ``psi`` map a point to a vector; returns shape (len phi, len psi).
    Every moment, including the escort normalizer, is computed by quadrature.
    """
    if beta == 0 and not p.is_sparse:
        raise InfiniteSupport("beta = 0 covariance needs a finite-measure support")

    def weight(v):
        v = np.asarray(v, dtype=float)
        if beta == 0:
            return (v > 0).astype(float)
        return np.where(v > 0, v ** beta, 0.0)

    if p.dim == 1:
        def integral(h):
            return integrate_density(p, lambda t: float(weight(p.pdf(t))) * h(t), spec, points=points)

        m = len(_as_vec(phi(0.0)))
        n = len(_as_vec(psi(0.0)))
        norm = integral(lambda t: 1.0)
        e_phi = np.array([integral(lambda t, i=i: _as_vec(phi(t))[i]) for i in range(m)])
        e_psi = np.array([integral(lambda t, k=k: _as_vec(psi(t))[k]) for k in range(n)])
        e_pp = np.array([[integral(lambda t, i=i, k=k: _as_vec(phi(t))[i] * _as_vec(psi(t))[k])
                          for k in range(n)] for i in range(m)])
    else:
        window = p.integration_window()
        x, w = cm.ellipse_rule(window.center, window.shape_matrix, nodes_per_axis)
        wt = w * weight(p.pdf(x))
        F = np.asarray(phi(x), dtype=float).reshape(len(x), -1)
        G = np.asarray(psi(x), dtype=float).reshape(len(x), -1)
        norm = wt.sum()
        e_phi = F.T @ wt
        e_psi = G.T @ wt
        e_pp = (F * wt[:, None]).T @ G
    return e_pp - np.outer(e_phi, e_psi) / norm


def finite_diff_jacobian(f, x, spec: FiniteDiffSpec = FiniteDiffSpec()) -> np.ndarray:
    """Central differences; result[i, k] = d f_i / d x_k."""
    x = _as_vec(x)
    h = spec.step
    cols = []
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = h
        cols.append((_as_vec(f(x + e)) - _as_vec(f(x - e))) / (2.0 * h))
    return np.stack(cols, axis=1)


def fd_attention_jacobian(forward_fn, score, step: float = 1e-6) -> np.ndarray:
    """Finite-difference dr/dtheta in the (M, N) attention layout.

    In 2D the off-diagonal quadratic entries are perturbed together (the
    score stays symmetric); the joint derivative is split evenly between
    the two raw entries.
    """
    theta = score.as_vector()
    rebuild = type(score).from_vector
    if isinstance(score, CanonicalScore2D):
        dirs = np.eye(6)
        dirs[3, 4] = dirs[4, 3] = 1.0
        scale = np.array([1, 1, 1, 0.5, 0.5, 1.0])
    else:
        dirs = np.eye(2)
        scale = np.ones(2)
    rows = []
    for d, s in zip(dirs, scale):
        plus = forward_fn(rebuild(theta + step * d))
        minus = forward_fn(rebuild(theta - step * d))
        rows.append(s * (plus - minus) / (2.0 * step))
    return np.array(rows)


# --------------------------------------------------------------------------
# attention maps by quadrature

def _phi(dim):
    if dim == 1:
        return lambda t: np.array([t, t * t])

    def phi2(T):
        T = np.asarray(T)
        x, y = T[..., 0], T[..., 1]
        return np.stack([x, y, x * x, x * y, y * x, y * y], axis=-1)

    return phi2


def _psi(basis):
    if basis.dimension == 1:
        return lambda t: basis.evaluate(t)
    return lambda T: basis.evaluate(T)


def attention_forward_quadrature(score, basis, alpha: int, nodes_per_axis: int = ORACLE_NODES_2D) -> np.ndarray:
    p = density_from_score(score, alpha)
    pts = list(basis.centers[:, 0]) if basis.dimension == 1 else ()
    out = []
    for j in range(len(basis)):
        if basis.dimension == 1:
            g = lambda t, j=j: cm.gaussian_pdf(t, basis.centers[j], basis.widths[j])
        else:
            g = lambda T, j=j: cm.gaussian_pdf(T, basis.centers[j], basis.widths[j])
        out.append(expectation_quadrature(p, g, points=pts, nodes_per_axis=nodes_per_axis))
    return np.array(out)


def attention_jacobian_quadrature(score, basis, alpha: int, nodes_per_axis: int = ORACLE_NODES_2D) -> np.ndarray:
    """(2 - alpha)-covariance of (phi, psi) by quadrature, layout (M, N)."""
    p = density_from_score(score, alpha)
    pts = list(basis.centers[:, 0]) if basis.dimension == 1 else ()
    return generalized_cov_quadrature(p, _phi(basis.dimension), _psi(basis), 2 - alpha,
                                      points=pts, nodes_per_axis=nodes_per_axis)


# --------------------------------------------------------------------------
# discrete

def _support_sets(L: int) -> np.ndarray:
    """All 2^L - 1 nonempty subsets of range(L) as a boolean (K, L) array."""
    bits = np.array(list(itertools.product((False, True), repeat=L))[1:], dtype=bool)
    return bits


def simplex_projection_bruteforce(f) -> SimplexVector:
    """argmin_{p in simplex} ||p - f||^2 by enumerating every support set.

    For each support S the equality-constrained problem has the closed form
    p_S = f_S - tau, tau = (sum f_S - 1) / |S|; a candidate is kept if it is
    nonnegative on S and satisfies the KKT condition f_i <= tau off S.
    """
    f = np.asarray(f, dtype=float).ravel()
    L = f.size
    if L > 20:
        raise TooLarge(f"support enumeration is exponential; L = {L} > 20")
    if L == 0:
        raise ValueError("score vector must be nonempty")
    S = _support_sets(L)
    size = S.sum(axis=1)
    tau = (S @ f - 1.0) / size
    P = np.where(S, f[None, :] - tau[:, None], 0.0)
    on_ok = np.all(np.where(S, P >= -1e-12, True), axis=1)
    off_ok = np.all(np.where(S, True, f[None, :] <= tau[:, None] + 1e-12), axis=1)
    feasible = np.flatnonzero(on_ok & off_ok)
    P = np.maximum(P[feasible], 0.0)
    obj = np.sum((P - f[None, :]) ** 2, axis=1)
    return SimplexVector.from_probs(P[int(np.argmin(obj))])
