"""Exception types raised across the package."""


class FieldfuseError(Exception):
    """Base class for package-specific errors."""


class BehindCamera(FieldfuseError):
    """Point lies outside the camera's valid projection domain."""


class InvalidPixel(FieldfuseError):
    """Pixel lies outside the camera's valid unprojection domain."""


class DegenerateLookAt(FieldfuseError):
    """Camera center and look-at target coincide."""


class TooFewPoses(FieldfuseError):
    """Not enough poses survive to carry out the operation."""


class DegenerateBaseline(FieldfuseError):
    """Pose centers coincide, so the relative scale is unobservable."""


class SingularNormalEquations(FieldfuseError):
    """Normal equations are rank deficient for the given geometry."""


class DivergedMaxIter(FieldfuseError):
    """Solver hit the iteration cap without meeting a convergence test."""


class AllInvalid(FieldfuseError):
    """No correspondence projects under the given model."""


class ZeroMass(FieldfuseError):
    """Blended ray carries no termination mass from any field."""


class DimensionMismatch(FieldfuseError):
    """Images passed to a metric have different shapes."""


class EmptyMask(FieldfuseError):
    """Metric mask selects no pixels."""


class UnknownExperiment(FieldfuseError):
    """Experiment name does not match any registered driver."""


class InvalidConfig(FieldfuseError):
    """Experiment or CLI configuration is malformed."""


class RegistrationFailed(FieldfuseError):
    """A registration marked unsuccessful was used where success is required."""
