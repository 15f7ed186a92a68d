"""Exception hierarchy shared by all stages.

Every class carries the process exit code used by the command-line driver.
"""


class MetaKGError(Exception):
    """Base class for all package errors."""

    exit_code = 4


class InputError(MetaKGError, ValueError):
    """Invalid argument, configuration value, or mismatched grids."""

    exit_code = 1


class ConfigError(InputError):
    """Unreadable or inconsistent scenario configuration."""


class GridMismatchError(InputError):
    """Grid functions or operators defined on different grids."""


class WindowTooShortError(InputError):
    """Fit window shorter than one decade or outside the sampled range."""


class PhysicsPreconditionError(MetaKGError, ValueError):
    """The scenario violates a physical hypothesis (no resonance, no bound state, ...)."""

    exit_code = 2


class NoResonanceError(PhysicsPreconditionError):
    """3*Omega does not lie inside the continuous spectrum."""


class BoundStateError(PhysicsPreconditionError):
    """Zero or several eigenvalues below the continuum threshold."""


class SmallnessError(PhysicsPreconditionError):
    """Small-data scale violates the smallness rule."""


class MissingArtifactError(MetaKGError, FileNotFoundError):
    """An upstream stage artifact is absent."""

    exit_code = 3


class NumericalError(MetaKGError, RuntimeError):
    """Numerical failure: blow-up, step underflow, disagreement between methods."""

    exit_code = 4


class ResolutionError(NumericalError):
    """Discretization too coarse for the requested quantity."""


class TailToleranceError(NumericalError):
    """Truncation of an integral at a finite time exceeds its tolerance."""
