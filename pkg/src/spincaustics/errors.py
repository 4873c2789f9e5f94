"""Exception types shared across the package."""


class SpinCausticsError(Exception):
    """Base class for all package-specific failures."""


class ZeroOfInfluenceFunctional(SpinCausticsError):
    """The influence function Z vanished where its logarithm was needed.

    Carries the offending position so callers can record it as a
    caustic source point.
    """

    def __init__(self, q, message=None):
        self.q = q
        super().__init__(message or f"influence function vanishes near q = {q}")


class NoRoots(SpinCausticsError):
    """No Newton seed converged to a boundary-value root."""


class QuadratureFailure(SpinCausticsError):
    """Adaptive quadrature exceeded its refinement depth limit."""


class GridTooCoarse(SpinCausticsError):
    """Spectral tail mass above the Nyquist band exceeds tolerance."""


class BranchTrackingLost(SpinCausticsError):
    """A coalescing saddle pair could not be continued along a Stokes line."""


class ConfigError(SpinCausticsError):
    """Invalid run configuration (unknown key, bad value, missing field)."""
