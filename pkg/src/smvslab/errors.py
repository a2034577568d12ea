"""Exception hierarchy shared by all smvslab modules."""


class SmvslabError(Exception):
    """Base class for all domain errors raised by this package."""


class ParameterError(SmvslabError, ValueError):
    """A precondition on user-supplied parameters was violated."""


class UndefinedAzimuthError(ParameterError):
    """A point on the z-axis has no horizontal azimuth."""


class QueryError(SmvslabError):
    """A spatial query was issued against an unusable index."""


class DegenerateLinearizationError(SmvslabError):
    """No correspondences were found; the linear system is empty."""


class AnalysisError(SmvslabError):
    """SMVS analysis could not be completed for a frame."""


class DegenerateFitError(SmvslabError):
    """Line fitting was attempted on coincident points."""


class DivergenceError(SmvslabError):
    """Gauss-Newton produced a non-finite update.

    Carries the last valid pose so callers can fall back to it.
    """

    def __init__(self, message, last_pose=None):
        super().__init__(message)
        self.last_pose = last_pose
