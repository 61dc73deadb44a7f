"""
Error Types

Exception hierarchy shared by the manifold kernel, the operators, the solver,
the contour tools and the CLI. Every error also derives from the builtin it
refines so callers catching ValueError/RuntimeError keep working.
"""

from typing import Any, Optional, Tuple


class LevelSetError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(LevelSetError, ValueError):
    """
    Invalid configuration: unknown registry name, bad key, conflicting sections.

    Attributes:
        key: dotted config key at fault, when known
        line: 1-based line in the config file, when known
        column: 1-based column in the config file, when known
    """

    def __init__(self, message: str, key: Optional[str] = None,
                 line: Optional[int] = None, column: Optional[int] = None):
        super().__init__(message)
        self.key = key
        self.line = line
        self.column = column


class NonPositiveDefinite(LevelSetError, ValueError):
    """A sampled metric tensor failed positive-definiteness."""

    def __init__(self, message: str, node: Optional[Tuple[int, ...]] = None):
        super().__init__(message)
        self.node = node


class ProfileTooSmall(LevelSetError, ValueError):
    """A surface-of-revolution profile dropped below the admissible floor."""


class ChartExit(LevelSetError, RuntimeError):
    """A geodesic left the range of a non-periodic chart axis."""

    def __init__(self, message: str, point: Any = None):
        super().__init__(message)
        self.point = point


class EmptySeeds(LevelSetError, ValueError):
    """A distance field was requested without seed points."""


class RadiusTooLarge(LevelSetError, ValueError):
    """Sampling radius exceeds the injectivity or curvature budget."""


class DegenerateGradient(LevelSetError, ValueError):
    """|ζ| fell below the operator's gradient floor."""


class NonSymmetric(LevelSetError, ValueError):
    """A bilinear form argument is not symmetric."""


class EmptyContour(LevelSetError, ValueError):
    """An operation needed a front but the contour has no vertices."""


class BlowUp(LevelSetError, RuntimeError):
    """
    The explicit scheme produced non-finite or exploding values.

    Attributes:
        node: grid index of the offending node
        time: simulation time of the failed step
        trajectory: snapshots computed before the failure
    """

    def __init__(self, message: str, node: Optional[Tuple[int, int]] = None,
                 time: float = 0.0, trajectory: Any = None):
        super().__init__(message)
        self.node = node
        self.time = time
        self.trajectory = trajectory


class FormatError(LevelSetError, ValueError):
    """Corrupt or incompatible snapshot file."""

    def __init__(self, message: str, offset: int = 0):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset
