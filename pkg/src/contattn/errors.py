"""Exception types raised across the package."""


class NotSPD(ValueError):
    """A matrix that must be symmetric positive definite is not."""


class DegenerateCovariance(ValueError):
    """A moment-matched covariance is (numerically) singular."""


class NoBracket(ValueError):
    """A root-finding interval does not bracket a sign change."""


class ToleranceNotReached(RuntimeError):
    """An iterative routine ran out of budget before meeting its tolerance."""


class InfiniteSupport(ValueError):
    """An operation needs a finite-measure support but the density has none."""


class SingularSystem(ValueError):
    """A linear system could not be solved by symmetric factorization."""


class TooLarge(ValueError):
    """Input exceeds the size guard of an exponential-time routine."""
