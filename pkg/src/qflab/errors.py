"""Exception hierarchy shared by every stage of the pipeline."""


class QFLabError(Exception):
    """Base class; ``stage`` names the pipeline stage that raised."""

    stage = "core"


class SurfaceError(QFLabError, ValueError):
    stage = "curves"


class NotConnected(SurfaceError):
    pass


class GenusTooSmall(SurfaceError):
    pass


class NonPositiveWeight(SurfaceError):
    pass


class WeightCountMismatch(SurfaceError):
    pass


class FormatError(QFLabError, ValueError):
    stage = "io"


class UnsupportedCurve(QFLabError, ValueError):
    stage = "flatsurf"


class NonPositiveScale(QFLabError, ValueError):
    stage = "flatsurf"


class TargetTooCoarse(QFLabError, ValueError):
    stage = "mesh"


class DegenerateTriangle(QFLabError, ArithmeticError):
    stage = "mesh"


class NewtonDiverged(QFLabError, ArithmeticError):
    stage = "solver"

    def __init__(self, message, trace=()):
        super().__init__(message)
        self.trace = list(trace)


class NonConvergedTolerance(QFLabError, ArithmeticError):
    stage = "solver"

    def __init__(self, message, trace=()):
        super().__init__(message)
        self.trace = list(trace)


class UnsupportedChart(QFLabError, ValueError):
    stage = "almostfuchsian"


class DegenerateEplusB(QFLabError, ArithmeticError):
    stage = "almostfuchsian"


class PrincipalCurvatureExceedsOne(QFLabError, RuntimeWarning):
    """Raised by operations that need embedded equidistants; issued as a
    warning by the Gauss solver, which still returns its solution."""

    stage = "almostfuchsian"


class QuadratureFailure(QFLabError, ArithmeticError):
    stage = "almostfuchsian"


class NotThroughFuchsian(QFLabError, ValueError):
    stage = "halfpipe"


class NotLorentz(QFLabError, ValueError):
    stage = "halfpipe"


class UnknownKind(QFLabError, ValueError):
    stage = "cli"


class ConfigError(QFLabError, ValueError):
    stage = "cli"
