"""Continuous softmax / sparsemax attention with Gaussian RBF value bases.

The attention map sends canonical score parameters ``theta`` to
``r = E_p[psi(t)]`` where ``p`` is the alpha-entmax density of
``f_theta(t) = theta^T [t, vec(t t^T)]`` and ``psi`` is a bank of Gaussian
RBFs. Its Jacobian is the (2 - alpha)-covariance of (phi, psi). Layout of
Jacobians is (M, N): M = 2 rows in 1D (t, t^2) and M = 6 rows in 2D
(t_0, t_1, then the four raw entries of t t^T, row-major).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import core_math as cm
from .densities import (
    CanonicalScore1D,
    CanonicalScore2D,
    paraboloid_lambda,
    truncated_parabola_lambda,
    _check_cov,
)
from .discrete import SimplexVector
from .errors import DegenerateCovariance, ToleranceNotReached

DEFAULT_ANGULAR_NODES = 512
ANGULAR_REFINE_TOL = 1e-7


# --------------------------------------------------------------------------
# parameter conversions

def theta_from_moments(mu, cov):
    """(mu, Sigma) -> canonical score; scalar inputs give the 1D score."""
    if np.ndim(mu) == 0:
        return CanonicalScore1D.from_moments(float(mu), float(np.squeeze(cov)))
    return CanonicalScore2D.from_moments(mu, cov)


def moments_from_theta(score):
    if isinstance(score, CanonicalScore1D):
        return score.mu, score.sigma2
    return score.mu, score.cov


def moment_match_from_discrete(p, locations, min_eig: float = 1e-10):
    """Mean and covariance of the discrete distribution ``p`` over ``locations``."""
    probs = np.asarray(p.probs if isinstance(p, SimplexVector) else p, dtype=float)
    locs = np.asarray(locations, dtype=float)
    if locs.shape[0] != probs.shape[0]:
        raise ValueError("p and locations must have the same length")
    if locs.ndim == 1:
        mu = float(probs @ locs)
        var = float(probs @ (locs * locs) - mu * mu)
        if var < min_eig:
            raise DegenerateCovariance(f"moment-matched variance {var:.3e} is degenerate")
        return mu, var
    mu = probs @ locs
    cov = (locs * probs[:, None]).T @ locs - np.outer(mu, mu)
    cov = 0.5 * (cov + cov.T)
    if np.linalg.eigvalsh(cov).min() < min_eig:
        raise DegenerateCovariance("moment-matched covariance is degenerate")
    return mu, cov


# --------------------------------------------------------------------------
# basis

@dataclass(frozen=True, eq=False)
class RBFBasis:
    """Gaussian RBFs psi_j(t) = N(t; centers[j], widths[j]).

    ``centers`` has shape (N, D); ``widths`` (N, D, D). 1D constructors accept
    scalars and reshape.
    """

    centers: np.ndarray
    widths: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.centers, dtype=float)
        if c.ndim == 1:
            c = c[:, None]
        n, d = c.shape
        w = np.asarray(self.widths, dtype=float)
        if w.ndim <= 1:
            w = np.broadcast_to(w.reshape(-1, 1, 1), (n, 1, 1)) if d == 1 else w
        elif w.ndim == 2:
            w = np.broadcast_to(w, (n, d, d))
        w = np.array(w, dtype=float)
        if n < 1 or w.shape != (n, d, d):
            raise ValueError(f"inconsistent basis shapes: centers {c.shape}, widths {w.shape}")
        if d not in (1, 2):
            raise ValueError("only 1D and 2D bases are supported")
        for wj in w:
            cm.cholesky_spd(wj)
        c.flags.writeable = False
        w.flags.writeable = False
        object.__setattr__(self, "centers", c)
        object.__setattr__(self, "widths", w)

    @classmethod
    def linear_1d(cls, n: int, sigma: float, lo: float = 0.0, hi: float = 1.0) -> "RBFBasis":
        """``n`` centres evenly spaced on [lo, hi], common std ``sigma``."""
        return cls(np.linspace(lo, hi, n), np.full(n, sigma * sigma))

    @classmethod
    def grid_2d(cls, n: int, var: float = 1e-3) -> "RBFBasis":
        """sqrt(n) x sqrt(n) centres on [0, 1]^2, isotropic width ``var`` * I."""
        side = math.isqrt(n)
        if side * side != n:
            raise ValueError("grid_2d needs a square number of basis functions")
        g = np.linspace(0.0, 1.0, side)
        X, Y = np.meshgrid(g, g, indexing="ij")
        centers = np.stack([X.ravel(), Y.ravel()], axis=1)
        return cls(centers, np.broadcast_to(var * np.eye(2), (n, 2, 2)))

    @property
    def dimension(self) -> int:
        return self.centers.shape[1]

    def __len__(self):
        return self.centers.shape[0]

    def key(self):
        return (self.centers.tobytes(), self.widths.tobytes())

    def evaluate(self, t) -> np.ndarray:
        """psi(t), shape (..., N). 1D takes scalars or (...,) arrays, 2D takes (..., 2)."""
        t = np.asarray(t, dtype=float)
        return np.stack(
            [np.asarray(cm.gaussian_pdf(t, m, S)) for m, S in zip(self.centers, self.widths)],
            axis=-1,
        )


def _check_dims(score, basis):
    want = 1 if isinstance(score, CanonicalScore1D) else 2
    if basis.dimension != want:
        raise ValueError(f"score is {want}D but basis is {basis.dimension}D")


def _moments_nd(score):
    if isinstance(score, CanonicalScore1D):
        return np.array([score.mu]), np.array([[score.sigma2]])
    return score.mu, score.cov


# --------------------------------------------------------------------------
# alpha = 1: Gaussian densities, any dimension

def forward_softmax(score, basis: RBFBasis) -> np.ndarray:
    _check_dims(score, basis)
    mu, cov = _moments_nd(score)
    return np.array([float(np.squeeze(cm.gaussian_pdf(mu, m, cov + S))) for m, S in zip(basis.centers, basis.widths)])


def jacobian_softmax(score, basis: RBFBasis) -> np.ndarray:
    _check_dims(score, basis)
    mu, cov = _moments_nd(score)
    prec = np.linalg.inv(cov)
    D = mu.shape[0]
    rows = []
    for m, S in zip(basis.centers, basis.widths):
        s = float(np.squeeze(cm.gaussian_pdf(mu, m, cov + S)))
        Sprec = np.linalg.inv(S)
        cov_t = np.linalg.inv(prec + Sprec)
        mu_t = cov_t @ (prec @ mu + Sprec @ m)
        lin = s * (mu_t - mu)
        quad = s * (cov_t + np.outer(mu_t, mu_t) - cov - np.outer(mu, mu))
        rows.append(np.concatenate([lin, quad.ravel() if D > 1 else quad[0]]))
    return np.array(rows).T


# --------------------------------------------------------------------------
# alpha = 2, D = 1: truncated parabola, closed form via erf

def _tp_pieces(score: CanonicalScore1D, basis: RBFBasis):
    """Support half-width, normalizer, and per-basis integrals over the support.

    Returns (a, lam, I0, It, It2) with It = ∫ t psi_j, It2 = ∫ t^2 psi_j and
    I0 = ∫ psi_j, all over [mu - a, mu + a].
    """
    _check_dims(score, basis)
    mu, s2 = score.mu, score.sigma2
    a = (1.5 * s2) ** (1.0 / 3.0)
    lam = truncated_parabola_lambda(s2)
    mj = basis.centers[:, 0]
    sj = np.sqrt(basis.widths[:, 0, 0])
    u = (mu - a - mj) / sj
    v = (mu + a - mj) / sj
    mom = cm.normal_interval_moments(u, v, 2)
    I0 = mom[0]
    It = mj * mom[0] + sj * mom[1]
    It2 = mj * mj * mom[0] + 2.0 * mj * sj * mom[1] + sj * sj * mom[2]
    return a, lam, mom, I0, It, It2


def forward_sparsemax_1d(score: CanonicalScore1D, basis: RBFBasis) -> np.ndarray:
    a, lam, mom, I0, _, _ = _tp_pieces(score, basis)
    mu, s2 = score.mu, score.sigma2
    mj = basis.centers[:, 0]
    sj = np.sqrt(basis.widths[:, 0, 0])
    d = mj - mu
    # ∫ (t - mu)^2 psi_j over the support, in the shifted variable
    centred2 = d * d * mom[0] + 2.0 * d * sj * mom[1] + sj * sj * mom[2]
    return -lam * I0 - centred2 / (2.0 * s2)


def jacobian_sparsemax_1d(score: CanonicalScore1D, basis: RBFBasis) -> np.ndarray:
    a, _, _, I0, It, It2 = _tp_pieces(score, basis)
    mu = score.mu
    # uniform-on-support moments of t and t^2
    return np.vstack([It - mu * I0, It2 - (mu * mu + a * a / 3.0) * I0])


# --------------------------------------------------------------------------
# alpha = 2, D = 2: truncated paraboloid, polar reduction

def _radial_moments(r0, sig, order: int):
    """J_k = ∫_0^1 r^k N(r; r0, sig^2) dr for k = 0..order (vectorized)."""
    u = -r0 / sig
    v = (1.0 - r0) / sig
    J = np.empty((order + 1,) + np.shape(r0))
    J[0] = 0.5 * cm.erf_diff(u / cm.SQRT2, v / cm.SQRT2)
    s2 = sig * sig
    n0 = sig * cm.std_normal_pdf(u)  # sig^2 N(0; r0, sig^2)
    n1 = sig * cm.std_normal_pdf(v)  # sig^2 N(1; r0, sig^2)
    if order >= 1:
        J[1] = r0 * J[0] - (n1 - n0)
    for k in range(2, order + 1):
        J[k] = r0 * J[k - 1] + s2 * (k - 1) * J[k - 2] - n1
    return J


@dataclass(frozen=True, eq=False)
class _PolarSetup:
    lam: float
    mu: np.ndarray
    cov: np.ndarray
    A: np.ndarray  # t = mu + A u maps the unit disc onto the support
    dirs: np.ndarray  # (n, 2) unit directions
    weight: float  # trapezoid weight 2 pi / n


def _polar_setup(score: CanonicalScore2D, n: int) -> _PolarSetup:
    mu, cov = score.mu, _check_cov(score.cov)
    lam = paraboloid_lambda(cov)
    A = math.sqrt(-2.0 * lam) * cm.sqrtm_spd(cov)
    phi = 2.0 * math.pi * np.arange(n) / n
    dirs = np.stack([np.cos(phi), np.sin(phi)], axis=1)
    return _PolarSetup(lam, mu, cov, A, dirs, 2.0 * math.pi / n)


def _ray_terms(setup: _PolarSetup, mj, Sj, order: int):
    """Per-direction scale s~(phi) and radial moments J_k(phi) for one RBF."""
    Ainv = np.linalg.inv(setup.A)
    mu_t = Ainv @ (mj - setup.mu)
    cov_t = Ainv @ Sj @ Ainv.T
    cov_t = 0.5 * (cov_t + cov_t.T)
    P = np.linalg.inv(cov_t)
    a = setup.dirs
    aPa = np.einsum("ni,ij,nj->n", a, P, a)
    aPm = a @ (P @ mu_t)
    sig2 = 1.0 / aPa
    sig = np.sqrt(sig2)
    r0 = sig2 * aPm
    quad = mu_t @ P @ mu_t - sig2 * aPm * aPm
    s_t = sig / (cm.SQRT2PI * math.sqrt(np.linalg.det(cov_t))) * np.exp(-0.5 * np.maximum(quad, 0.0))
    return s_t, _radial_moments(r0, sig, order)


def _sparsemax_2d_raw(score, basis, n, with_jacobian):
    setup = _polar_setup(score, n)
    mu, lam, A, w = setup.mu, setup.lam, setup.A, setup.weight
    Aa = setup.dirs @ A.T  # (n, 2): A a(phi)
    area = math.pi * math.sqrt(np.linalg.det(-2.0 * lam * setup.cov))
    # uniform-on-ellipse second moment: mu mu^T + Q / 4 with Q = -2 lam Sigma
    unif_tt = np.outer(mu, mu) - 0.5 * lam * setup.cov
    r = np.empty(len(basis))
    jac = np.empty((6, len(basis))) if with_jacobian else None
    for j, (mj, Sj) in enumerate(zip(basis.centers, basis.widths)):
        s_t, J = _ray_terms(setup, mj, Sj, 3)
        r[j] = -lam * w * np.sum(s_t * (J[1] - J[3]))
        if not with_jacobian:
            continue
        int_psi = w * np.sum(s_t * J[1])
        int_t = w * (np.einsum("n,ni->i", s_t * J[2], Aa) + mu * np.sum(s_t * J[1]))
        outer_aa = np.einsum("ni,nk->nik", Aa, Aa)
        cross = np.einsum("ni,k->nik", Aa, mu)
        cross = cross + cross.transpose(0, 2, 1)
        int_tt = w * (
            np.einsum("n,nik->ik", s_t * J[3], outer_aa)
            + np.einsum("n,nik->ik", s_t * J[2], cross)
            + np.outer(mu, mu) * np.sum(s_t * J[1])
        )
        jac[:2, j] = int_t - mu * int_psi
        jac[2:, j] = (int_tt - unif_tt * int_psi).ravel()
    return r, jac, area


def _refined(fn, n, check):
    out = fn(n)
    if check:
        fine = fn(2 * n)
        delta = max(np.max(np.abs(np.asarray(a) - np.asarray(b))) for a, b in zip(out, fine))
        if delta > ANGULAR_REFINE_TOL:
            raise ToleranceNotReached(
                f"doubling angular nodes from {n} changed the result by {delta:.3e}"
            )
    return out


def forward_sparsemax_2d(score: CanonicalScore2D, basis: RBFBasis,
                         angular_nodes: int = DEFAULT_ANGULAR_NODES, check: bool = True) -> np.ndarray:
    """r_j by polar reduction: closed-form radial integral, trapezoid in angle.

    With ``check`` (default) the computation is repeated at twice the angular
    nodes and ToleranceNotReached is raised if the result moves by more than
    1e-7. The check cannot see a basis function so narrow that both
    resolutions step over it; keep basis std above ~1% of the support radius
    at the default node count.
    """
    _check_dims(score, basis)
    if angular_nodes < 64:
        raise ValueError("angular_nodes must be >= 64")
    return _refined(lambda n: (_sparsemax_2d_raw(score, basis, n, False)[0],), angular_nodes, check)[0]


def jacobian_sparsemax_2d(score: CanonicalScore2D, basis: RBFBasis,
                          angular_nodes: int = DEFAULT_ANGULAR_NODES, check: bool = True) -> np.ndarray:
    _check_dims(score, basis)
    if angular_nodes < 64:
        raise ValueError("angular_nodes must be >= 64")
    return _refined(lambda n: (_sparsemax_2d_raw(score, basis, n, True)[1],), angular_nodes, check)[0]


# --------------------------------------------------------------------------
# dispatch

@dataclass(frozen=True, eq=False)
class AttentionResult:
    r: np.ndarray
    jacobian: np.ndarray
    context: np.ndarray | None = None
    B: np.ndarray | None = None

    def backward(self, grad_context) -> np.ndarray:
        """dL/dtheta = (dr/dtheta) B^T dL/dc, in the Jacobian's row layout."""
        if self.B is None:
            raise ValueError("backward needs a value function")
        return self.jacobian @ (self.B.T @ np.asarray(grad_context, dtype=float))


def forward(score, basis: RBFBasis, alpha: int, angular_nodes: int = DEFAULT_ANGULAR_NODES) -> np.ndarray:
    if alpha == 1:
        return forward_softmax(score, basis)
    if alpha == 2:
        if isinstance(score, CanonicalScore1D):
            return forward_sparsemax_1d(score, basis)
        return forward_sparsemax_2d(score, basis, angular_nodes)
    raise ValueError(f"continuous attention is implemented for alpha in {{1, 2}}, got {alpha}")


def jacobian(score, basis: RBFBasis, alpha: int, angular_nodes: int = DEFAULT_ANGULAR_NODES) -> np.ndarray:
    if alpha == 1:
        return jacobian_softmax(score, basis)
    if alpha == 2:
        if isinstance(score, CanonicalScore1D):
            return jacobian_sparsemax_1d(score, basis)
        return jacobian_sparsemax_2d(score, basis, angular_nodes)
    raise ValueError(f"continuous attention is implemented for alpha in {{1, 2}}, got {alpha}")


def attend(score, basis: RBFBasis, value=None, alpha: int = 1,
           angular_nodes: int = DEFAULT_ANGULAR_NODES) -> AttentionResult:
    """Forward and Jacobian in one call; ``score`` may also be a (mu, cov) pair.

    ``value`` is a ValueFunction or a bare (D, N) coefficient matrix.
    """
    if isinstance(score, tuple):
        score = theta_from_moments(*score)
    r = forward(score, basis, alpha, angular_nodes)
    J = jacobian(score, basis, alpha, angular_nodes)
    B = None
    if value is not None:
        B = np.asarray(getattr(value, "B", value), dtype=float)
        if B.shape[1] != len(basis):
            raise ValueError(f"value matrix has {B.shape[1]} columns, basis has {len(basis)}")
    return AttentionResult(r=r, jacobian=J, context=None if B is None else B @ r, B=B)
