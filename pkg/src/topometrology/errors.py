"""Exception and warning types raised across the package."""


class TopoMetrologyError(Exception):
    """Base class for all package errors."""


class ConfigError(TopoMetrologyError):
    """Malformed or inconsistent scenario configuration."""


class NumericError(TopoMetrologyError):
    """Base class for failures of a numerical routine."""


# band geometry
class GaplessPoint(NumericError):
    """The Bloch vector vanishes, so the band projector is undefined."""


class StepTooLarge(NumericError):
    """Finite-difference step too coarse for a reliable plaquette phase."""


class CriticalMass(NumericError):
    """Mass parameter at or too close to a gap-closing value."""


class NonQuantized(NumericError):
    """Lattice Chern sum is not close to an integer."""


# povm
class PovmError(NumericError):
    """A POVM violates one of its defining constraints."""


class WeightSumViolation(PovmError):
    pass


class CompletenessViolation(PovmError):
    pass


class NegativeWeight(PovmError):
    pass


class TooFewOutcomes(PovmError):
    """Fewer than three outcomes: cannot resolve two parameters."""


class DilationFailure(NumericError):
    pass


class InfeasibleDirections(PovmError):
    """No non-negative weights complete the given directions.

    Attributes:
        certificate: unit 3-vector v with v . m_i >= 0 for every direction,
            i.e. a witness that the directions lie in a closed half-space.
    """

    def __init__(self, message, certificate=None):
        super().__init__(message)
        self.certificate = certificate


# bounds / estimation
class SingularOutcome(NumericError):
    """Zero-probability outcome with a nonzero derivative (divergent FIM)."""


class DegenerateQfi(NumericError):
    """Quantum Fisher matrix is singular (vanishing Berry curvature)."""


class PoleSingularity(NumericError):
    """Unit vector sits on a pole of the spherical chart."""


class NotPositiveDefinite(NumericError):
    pass


class SingularFim(NumericError):
    """Classical Fisher matrix is singular; the estimator is not locally identifiable."""


class NonConvergence(NumericError):
    pass


class MonteCarloAborted(NumericError):
    """Too many Monte Carlo trials failed."""


class AllRestartsInfeasible(NumericError):
    pass


class DegenerateRecordWarning(UserWarning):
    """Likelihood ascent stalled; the record is inconsistent with the model."""


class DroppedOutcomeWarning(UserWarning):
    """An outcome with zero probability and zero gradient was dropped."""
