"""Exception types raised by the forward model and the recovery pipeline."""


class EwaldSpaError(Exception):
    """Base class for all package-specific errors."""


class OrderMismatch(EwaldSpaError):
    """Series or table operands truncated at incompatible orders."""


class NonzeroConstantTerm(EwaldSpaError):
    """Composition requires inner series with vanishing constant term."""


class OutsideEwaldDisc(EwaldSpaError):
    """Frequency lies outside the disc |xi| < k where the sphere lift exists."""


class OutsideAperture(EwaldSpaError):
    """Frequency lies outside the objective aperture."""


class AssumptionViolated(EwaldSpaError):
    """Phantom fails the genericity assumptions the recovery relies on."""


class IllConditioned(EwaldSpaError):
    """Least-squares design matrix condition number exceeds the safe bound."""


class TooFewSamples(EwaldSpaError):
    """Not enough in-disc samples to support the requested fit degree."""


class DegenerateMass(EwaldSpaError):
    """Zeroth coefficient too small to divide by."""


class InconsistentMass(EwaldSpaError):
    """Records disagree on the zeroth coefficient beyond tolerance."""


class EmptyFamily(EwaldSpaError):
    """No records admitted to the extremal rotation family."""


class AmbiguousSign(EwaldSpaError):
    """A sign decision fell below the resolvable threshold."""


class IncompleteCoverage(EwaldSpaError):
    """Family angles fail to reach an extremum needed by the pipeline."""


class NoSmallTheta(EwaldSpaError):
    """No family member inside the small-angle window."""


class DegenerateB(EwaldSpaError):
    """Curvature term vanishes, so the sign probe cannot separate candidates."""


class IllConditionedSystem(EwaldSpaError):
    """Angular interpolation system condition number exceeds the safe bound."""


class InsufficientAngles(EwaldSpaError):
    """Too few distinct resolved angles for the requested order."""


class InconsistentRecovery(EwaldSpaError):
    """Internal redundancy check failed; result would not be trustworthy."""
