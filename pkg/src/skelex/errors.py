"""Exception types shared across the package."""


class SkelexError(Exception):
    """Base class for all package errors."""


class NonIntegrableLevyMeasure(SkelexError):
    """The jump measure fails the (y ^ y^2) integrability requirement."""


class NegativeArgument(SkelexError):
    """A branching-mechanism evaluation was requested at lambda < 0."""


class MomentDivergence(SkelexError):
    """A moment integral defining a derivative diverges."""


class ConditionA1Violated(SkelexError):
    """psi does not reach +infinity, so no positive root exists."""


class NotSupercritical(SkelexError):
    """psi'(0) >= 0; the mechanism has no supercritical normalization."""


class NotNormalized(SkelexError):
    """Operation requires the standing normalization psi'(0) = -1, root at 1."""


class NonPositiveRate(SkelexError):
    """Derived branching rate is not positive."""


class TruncationFailure(SkelexError):
    """Offspring tail mass did not reach the truncation tolerance in time."""


class IndeterminateClassification(SkelexError):
    """A numeric convergence/divergence test failed to settle."""


class ParticleCapExceeded(SkelexError):
    """A replica exceeded the particle safety cap."""


class RangeViolation(SkelexError):
    """A test function left its required range."""


class BoundaryLeak(SkelexError):
    """PDE boundary flux exceeded the monitor threshold; grid too small."""


class BlowUp(SkelexError):
    """PDE values exceeded the blow-up guard."""


class ClipExceeded(SkelexError):
    """Clipping applied to an immigration functional exceeded tolerance."""


class NotInH(SkelexError):
    """Test function fails the exponential-moment membership test."""


class MissingBank(SkelexError):
    """A required sample bank was not supplied."""


class EmptyBank(SkelexError):
    """A decoration bank with no samples was supplied."""


class InfiniteIntensity(SkelexError):
    """Poisson sampling requested from a non-finite intensity."""


class InvalidEps(SkelexError):
    """Particle mass eps outside the admissible range."""


class ConditionA3Required(SkelexError):
    """Operation refused: the polynomial lower-bound condition fails."""


class NonConvergedFront(SkelexError):
    """Travelling-wave profile did not settle between checkpoints."""


class UnknownRecipe(SkelexError):
    """Requested experiment recipe is not registered."""


class ConfigInvalid(SkelexError):
    """Experiment configuration failed validation."""
