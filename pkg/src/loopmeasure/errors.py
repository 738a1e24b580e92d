"""Exception and warning types shared across the package."""


class LoopmeasureError(Exception):
    """Base class for all package errors."""


class PointOnCurve(LoopmeasureError):
    """Query point lies on (or numerically too close to) the loop trace."""


class DegenerateLoop(LoopmeasureError):
    """Loop has no usable extent (diameter below tolerance)."""


class InvalidParameter(LoopmeasureError):
    """A numeric argument is outside its documented range."""


class InvalidWindow(LoopmeasureError):
    """A sampling window is empty, inverted, or otherwise unusable."""


class InvalidEvent(LoopmeasureError):
    """An event does not satisfy the structural precondition of an estimator."""


class EmptyBatch(LoopmeasureError):
    """An estimator was asked to work with zero samples."""


class AllZeroWeights(LoopmeasureError):
    """Weighted statistics are undefined because every weight is zero."""


class InsufficientData(LoopmeasureError):
    """Not enough data points for the requested fit or estimate."""


class DegenerateDesign(LoopmeasureError):
    """Least-squares design matrix is rank deficient."""


class EmptyGrid(LoopmeasureError):
    """Raster operation on a grid with no marked cells."""


class TouchesFrame(LoopmeasureError):
    """Percolation cluster touches the simulation frame; statistics would be biased."""


class BudgetExceeded(LoopmeasureError):
    """Enumeration request exceeds the configured time/memory budget."""


class InvalidStart(LoopmeasureError):
    """Walk-on-spheres start point is outside the domain or inside the absorbing shell."""


class NotAnnular(LoopmeasureError):
    """Grid region does not have exactly two complement components."""


class UnknownExperiment(LoopmeasureError):
    """Experiment name is not registered."""


class InvalidConfig(LoopmeasureError):
    """Experiment configuration has unknown keys or out-of-range values."""


class WindowViolation(UserWarning):
    """An accepted sample landed within 1% of a sampling-window edge.

    Warning grade by design: exploratory runs need the diagnostic, not a crash.
    """
