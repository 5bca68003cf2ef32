"""Continuous-domain softmax and sparsemax attention with closed-form gradients."""

from .attention import (
    AttentionResult,
    RBFBasis,
    attend,
    forward,
    forward_softmax,
    forward_sparsemax_1d,
    forward_sparsemax_2d,
    jacobian,
    jacobian_softmax,
    jacobian_sparsemax_1d,
    jacobian_sparsemax_2d,
    moment_match_from_discrete,
    moments_from_theta,
    theta_from_moments,
)
from .core_math import QuadratureSpec, RootSpec
from .densities import (
    CanonicalScore1D,
    CanonicalScore2D,
    Family,
    SparseDensity,
    make_gaussian_1d,
    make_gaussian_2d,
    make_location_scale,
    make_triangular,
    make_truncated_parabola,
    make_truncated_paraboloid,
)
from .discrete import SimplexVector, alpha_entmax, softmax, sparsemax
from .value_fn import ObservationMatrix, ValueFunction, fit

__version__ = "0.1.0"
