"""Exception types shared across the package."""


class GridError(ValueError):
    """Grid is not square, too small, or otherwise malformed."""


class NonFinite(FloatingPointError):
    """A field value left the finite range."""


class StepUnderflow(RuntimeError):
    """Time step shrank below the resolvable scale."""


class IterationFailure(RuntimeError):
    """Eigensolver failed to reach the required per-pair residual."""


class FitRejected(RuntimeError):
    """Short-time heat-trace fit inconsistent with the known constant term."""


class EmptyTrajectory(ValueError):
    """Trajectory has too few samples for the requested analysis."""


class InsufficientDecay(RuntimeError):
    """Residual history does not contain a usable decay window."""


class MaximalityViolation(RuntimeError):
    """A volume-normalized perturbation did not lower the determinant."""


class ConfigError(ValueError):
    """Run configuration file is malformed."""
