"""Exception types raised across the package."""


class SLELabError(Exception):
    """Base class for every error raised by slelab."""


class SwallowedThisStep(SLELabError):
    """The point lies on the slit grown during a single elementary step."""


class LossOfPrecision(SLELabError):
    """Reverse composition collapsed below the imaginary-part floor."""


class InsufficientWalkers(SLELabError):
    """Monte-Carlo capacity estimate is too noisy to be reported."""


class OutOfRange(SLELabError, ValueError):
    """A parameter lies outside its admissible range."""


class HorizonExceeded(SLELabError):
    """A conditioned run did not reach its marked point before the cap."""


class StepTooCoarse(SLELabError):
    """Adaptive refinement ran out of levels before the stopping rule fired."""


class TooShort(SLELabError):
    """A run is too short in radial time for the requested statistic."""


class OutsideDomain(SLELabError, ValueError):
    """Point is not interior to the domain."""


class TableRange(SLELabError):
    """Lookup outside the tabulated grid where no exact clamp is available."""


class CoincidentPoints(SLELabError, ValueError):
    """Two-point quantity requested at z == w."""


class UnderResolved(SLELabError):
    """Polyline spacing is too coarse for the requested neighbourhood radius."""


class QuadratureDiverged(SLELabError):
    """Grid refinement failed to stabilise the quadrature."""


class MapSingularOnTrace(SLELabError):
    """Map derivative vanishes or blows up along the trace."""


class DegenerateDesign(SLELabError, ValueError):
    """Regression design does not span enough range to fit a slope."""


class UnknownExperiment(SLELabError, KeyError):
    """Experiment name is not in the catalog."""


class ConfigInvalid(SLELabError, ValueError):
    """Experiment or CLI configuration failed validation."""


class TableMismatch(SLELabError, ValueError):
    """A stored table was built for different parameters."""
