"""Finite-domain softmax, sparsemax and alpha-entmax with their Jacobians."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import core_math as cm


@dataclass(frozen=True, eq=False)
class SimplexVector:
    probs: np.ndarray
    support_mask: np.ndarray

    @classmethod
    def from_probs(cls, probs) -> "SimplexVector":
        probs = np.asarray(probs, dtype=float)
        return cls(probs, probs > 0)

    def __array__(self, dtype=None, copy=None):
        return self.probs if dtype is None else self.probs.astype(dtype)

    def __len__(self):
        return len(self.probs)


def _scores(f) -> np.ndarray:
    f = np.asarray(f, dtype=float).ravel()
    if f.size < 1:
        raise ValueError("score vector must be nonempty")
    if not np.all(np.isfinite(f)):
        raise ValueError("score vector must be finite")
    return f


def softmax(f) -> SimplexVector:
    f = _scores(f)
    e = np.exp(f - f.max())
    return SimplexVector.from_probs(e / e.sum())


def sparsemax_threshold(f) -> float:
    """Threshold lam with sum([f - lam]_+) = 1 (sort-and-cumsum)."""
    f = _scores(f)
    z = np.sort(f)[::-1]
    cssv = np.cumsum(z) - 1.0
    k = np.arange(1, f.size + 1)
    cond = z - cssv / k > 0
    rho = k[cond][-1]
    return float(cssv[rho - 1] / rho)


def sparsemax(f) -> SimplexVector:
    """Euclidean projection of ``f`` onto the simplex.

    Coordinates that land exactly on the threshold get probability 0 and are
    left out of the support mask.
    """
    f = _scores(f)
    lam = sparsemax_threshold(f)
    return SimplexVector.from_probs(np.maximum(f - lam, 0.0))


def alpha_entmax(f, alpha: float, spec: cm.RootSpec = cm.RootSpec(1e-14, 400)) -> SimplexVector:
    """p_i = [(alpha - 1)(f_i - lam)]_+^{1/(alpha-1)}, lam by bracketed root search."""
    if not alpha > 1:
        raise ValueError("alpha_entmax needs alpha > 1")
    f = _scores(f)
    am1 = alpha - 1.0
    fmax = f.max()
    # at lam = fmax - 1/(alpha-1) the top entry alone already has mass 1
    lo = fmax - 1.0 / am1 - (fmax - f.min())
    hi = fmax

    def probs(lam):
        return np.maximum(am1 * (f - lam), 0.0) ** (1.0 / am1)

    lam = cm.bisect(lambda lam: probs(lam).sum() - 1.0, lo, hi, spec)
    p = probs(lam)
    return SimplexVector.from_probs(p / p.sum())


def jacobian_discrete(f, kind: str) -> np.ndarray:
    if kind == "softmax":
        p = softmax(f).probs
        return np.diag(p) - np.outer(p, p)
    if kind == "sparsemax":
        s = sparsemax(f).support_mask.astype(float)
        return np.diag(s) - np.outer(s, s) / s.sum()
    raise ValueError(f"unknown kind {kind!r}; expected 'softmax' or 'sparsemax'")
