"""Synthetic combined discrete + continuous attention with a gradient check."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import attention as att
from . import discrete
from .densities import density_from_score
from .oracle import FiniteDiffSpec, finite_diff_jacobian
from .value_fn import ObservationMatrix, fit, sequence_locations


@dataclass(frozen=True)
class DemoConfig:
    alpha: int = 1
    seed: int = 42
    D: int = 8
    L: int = 40
    n_basis: int = 16
    rbf_sigma: float = 0.1
    score_scale: float = 0.5
    ridge: float = 1e-6
    fd_step: float = 1e-6
    grad_tol: float = 1e-4

    def __post_init__(self):
        if self.alpha not in (1, 2):
            raise ValueError("alpha must be 1 or 2")
        if self.L < 2 or self.D < 1 or self.n_basis < 1:
            raise ValueError("need L >= 2, D >= 1, n_basis >= 1")


@dataclass
class DemoReport:
    config: DemoConfig
    locations: np.ndarray
    p_discrete: np.ndarray
    density: np.ndarray
    mu: float
    sigma2: float
    c_discrete: np.ndarray
    c_continuous: np.ndarray
    grad_analytic: np.ndarray
    grad_fd: np.ndarray
    extras: dict = field(default_factory=dict)

    @property
    def context(self) -> np.ndarray:
        return self.c_discrete + self.c_continuous

    @property
    def grad_delta(self) -> float:
        return float(np.max(np.abs(self.grad_analytic - self.grad_fd)))

    @property
    def grad_ok(self) -> bool:
        return self.grad_delta <= self.config.grad_tol


def _discrete(f, alpha):
    return discrete.softmax(f) if alpha == 1 else discrete.sparsemax(f)


def _pipeline(f, H, t, basis, B, alpha):
    p = _discrete(f, alpha).probs
    mu, s2 = att.moment_match_from_discrete(p, t)
    score = att.theta_from_moments(mu, s2)
    r = att.forward(score, basis, alpha)
    return p, score, H @ p, B @ r


def _loss(f, H, t, basis, B, alpha):
    _, _, c_disc, c_cont = _pipeline(f, H, t, basis, B, alpha)
    return float(np.sum(c_disc + c_cont))


def _analytic_grad(f, H, t, basis, B, alpha):
    p, score, _, _ = _pipeline(f, H, t, basis, B, alpha)
    mu, s2 = score.mu, score.sigma2
    ones = np.ones(H.shape[0])
    g_theta = att.attend(score, basis, B, alpha).backward(ones)
    dmu = t
    ds2 = t * t - 2.0 * mu * t
    dth1 = dmu / s2 - mu * ds2 / s2**2
    dth2 = ds2 / (2.0 * s2**2)
    g_p = H.T @ ones + g_theta[0] * dth1 + g_theta[1] * dth2
    J = discrete.jacobian_discrete(f, "softmax" if alpha == 1 else "sparsemax")
    return J.T @ g_p


def run_demo(cfg: DemoConfig = DemoConfig()) -> DemoReport:
    rng = np.random.default_rng(cfg.seed)
    H = rng.standard_normal((cfg.D, cfg.L))
    f = cfg.score_scale * rng.standard_normal(cfg.L)
    t = sequence_locations(cfg.L)

    basis = att.RBFBasis.linear_1d(cfg.n_basis, cfg.rbf_sigma)
    B = fit(ObservationMatrix(H, t), basis, cfg.ridge).B

    p, score, c_disc, c_cont = _pipeline(f, H, t, basis, B, cfg.alpha)
    dens = density_from_score(score, cfg.alpha).pdf(t)

    grad = _analytic_grad(f, H, t, basis, B, cfg.alpha)
    fd = finite_diff_jacobian(lambda x: _loss(x, H, t, basis, B, cfg.alpha), f,
                              FiniteDiffSpec(cfg.fd_step))[0]

    extras = {}
    if cfg.alpha == 2:
        # distance of the scores to the sparsemax threshold; FD is only valid if > step
        lam = discrete.sparsemax_threshold(f)
        extras["support_margin"] = float(np.min(np.abs(f - lam)))
        extras["support_size"] = int(np.count_nonzero(p))
    return DemoReport(cfg, t, p, np.asarray(dens, dtype=float), score.mu, score.sigma2,
                      c_disc, c_cont, grad, fd, extras)
