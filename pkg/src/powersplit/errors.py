"""Exception types shared across the package."""


class PowersplitError(Exception):
    """Base class for package-specific failures."""


class ConfigError(PowersplitError):
    """Configuration missing, malformed, or internally inconsistent."""


class ParseError(PowersplitError):
    """Malformed input file."""


class NonMonotoneTime(ParseError):
    """Cycle timestamps are not strictly increasing."""


class EmptyObservation(PowersplitError):
    """No usable demand transitions in the observation set."""


class SingularLoadTransfer(PowersplitError):
    """Axle-load closed form is degenerate for the given friction split."""


class InfeasiblePower(PowersplitError):
    """Battery cannot source or sink the requested power."""


class NonConvergence(PowersplitError):
    """Iterative solver hit its sweep or iteration cap with residual error."""


class NoFeasibleControl(PowersplitError):
    """Constraint screening left no admissible control at a state."""


class InfeasibleStage(PowersplitError):
    """Backward DP reached a stage with no admissible control."""


class DegenerateFit(PowersplitError):
    """Regression input carries no usable variation."""


class MissingArtifact(PowersplitError):
    """A required trained artifact is absent on disk."""


class ArtifactMismatch(PowersplitError):
    """Artifact sidecar disagrees with the active configuration."""


class SpanTooNarrow(PowersplitError):
    """Search bracket excludes the minimizer (converged onto an edge)."""
