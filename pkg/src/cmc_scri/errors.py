"""Error taxonomy.

Scientific failures (anything that means "the numbers do not support the run")
derive from CmcScriError so the CLI can map them to exit code 1.  Configuration
and usage problems derive from ConfigError and map to exit code 2.
"""


class CmcScriError(Exception):
    """Base class for scientific failures."""


class ChartDomainError(CmcScriError):
    """Coordinate outside the exterior chart domain (r <= 2m or s outside (0, 1/2m))."""


class GridMismatchError(CmcScriError):
    """Sphere functions on different grids or modes combined."""


class SlabInversionError(CmcScriError):
    """A point does not lie inside the foliated slab (tau inversion failed)."""


class DegenerateFrameError(CmcScriError):
    """Tangent-frame Gram matrix lost positive definiteness (pivot below tolerance)."""


class SpacelikeError(CmcScriError):
    """Surface failed the spacelikeness requirement (L <= guard, or 1 - h|Du|^2 <= 0)."""


class NoBarrierError(CmcScriError):
    """Barrier search exhausted its doubling/halving budget without a valid pair."""


class GuardStarvationError(CmcScriError):
    """Newton line search hit the minimum step without an acceptable point."""


class NewtonConvergenceError(CmcScriError):
    """Newton iteration exceeded its budget without meeting the tolerance."""


class InsufficientWindowError(CmcScriError):
    """Asymptotic fit window contains too few grid levels."""


class UnstableEstimateError(CmcScriError):
    """Richardson-extrapolated estimates disagree across base steps."""


class ConfigError(Exception):
    """Bad configuration or usage; maps to CLI exit code 2."""
