"""Ridge-regression fit of a continuous value function V_B(t) = B psi(t)."""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .attention import RBFBasis
from .errors import SingularSystem

DEFAULT_RIDGE = 1e-6


@dataclass(frozen=True, eq=False)
class ObservationMatrix:
    """Encoder states H (D x L) observed at L distinct locations."""

    H: np.ndarray
    locations: np.ndarray

    def __post_init__(self):
        H = np.atleast_2d(np.asarray(self.H, dtype=float))
        locs = np.asarray(self.locations, dtype=float)
        if H.shape[1] != locs.shape[0]:
            raise ValueError(f"H has {H.shape[1]} columns but there are {locs.shape[0]} locations")
        if len(np.unique(locs.reshape(locs.shape[0], -1), axis=0)) != locs.shape[0]:
            raise ValueError("locations must be pairwise distinct")
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "locations", locs)

    @classmethod
    def from_sequence(cls, H) -> "ObservationMatrix":
        H = np.atleast_2d(np.asarray(H, dtype=float))
        return cls(H, sequence_locations(H.shape[1]))

    @classmethod
    def from_grid(cls, H) -> "ObservationMatrix":
        H = np.atleast_2d(np.asarray(H, dtype=float))
        return cls(H, grid_locations(H.shape[1]))


def sequence_locations(L: int) -> np.ndarray:
    """t_l = l / L for l = 1..L."""
    return np.arange(1, L + 1) / L


def grid_locations(L: int) -> np.ndarray:
    side = math.isqrt(L)
    if side * side != L:
        raise ValueError("2D observations need a square number of locations")
    g = np.arange(1, side + 1) / side
    X, Y = np.meshgrid(g, g, indexing="ij")
    return np.stack([X.ravel(), Y.ravel()], axis=1)


@dataclass(frozen=True, eq=False)
class ValueFunction:
    B: np.ndarray
    basis: RBFBasis

    def __post_init__(self):
        B = np.atleast_2d(np.asarray(self.B, dtype=float))
        if B.shape[1] != len(self.basis):
            raise ValueError("B must have one column per basis function")
        if not np.all(np.isfinite(B)):
            raise ValueError("B has non-finite entries")
        object.__setattr__(self, "B", B)

    def __call__(self, t):
        return evaluate(self, t)


def design_matrix(basis: RBFBasis, locations) -> np.ndarray:
    """F[j, l] = psi_j(t_l), shape (N, L)."""
    locs = np.asarray(locations, dtype=float)
    if locs.shape[0] == 0:
        raise ValueError("need at least one location")
    return basis.evaluate(locs).T


def precompute_G(F, ridge: float = DEFAULT_RIDGE) -> np.ndarray:
    """G = F^T (F F^T + ridge I)^{-1} via a Cholesky solve; shape (L, N)."""
    if ridge < 0:
        raise ValueError("ridge must be nonnegative")
    F = np.asarray(F, dtype=float)
    K = F @ F.T + ridge * np.eye(F.shape[0])
    try:
        factor = linalg.cho_factor(K, lower=True, check_finite=True)
    except linalg.LinAlgError as exc:
        raise SingularSystem("F F^T + ridge I is not positive definite") from exc
    if ridge == 0 and np.min(np.abs(np.diag(factor[0]))) ** 2 < 1e-14 * np.max(np.diag(K)):
        raise SingularSystem("F F^T is numerically rank-deficient; use ridge > 0")
    return linalg.cho_solve(factor, F).T


_G_CACHE: dict = {}
_G_LOCK = threading.Lock()


def cached_G(basis: RBFBasis, locations, ridge: float = DEFAULT_RIDGE) -> np.ndarray:
    """Read-only G shared by every fit on the same (basis, locations, ridge)."""
    locs = np.ascontiguousarray(locations, dtype=float)
    key = (basis.key(), locs.shape, locs.tobytes(), float(ridge))
    with _G_LOCK:
        G = _G_CACHE.get(key)
    if G is None:
        G = precompute_G(design_matrix(basis, locs), ridge)
        G.flags.writeable = False
        with _G_LOCK:
            G = _G_CACHE.setdefault(key, G)
    return G


def fit(obs: ObservationMatrix, basis: RBFBasis, ridge: float = DEFAULT_RIDGE) -> ValueFunction:
    """B = H G, the minimizer of ||B F - H||_F^2 + ridge ||B||_F^2."""
    G = cached_G(basis, obs.locations, ridge)
    return ValueFunction(obs.H @ G, basis)


def objective(B, F, H, ridge: float) -> float:
    return float(np.sum((B @ F - H) ** 2) + ridge * np.sum(B * B))


def evaluate(value: ValueFunction, t) -> np.ndarray:
    """V_B(t) = B psi(t); batched t gives shape (..., D)."""
    psi = value.basis.evaluate(t)
    return psi @ value.B.T
