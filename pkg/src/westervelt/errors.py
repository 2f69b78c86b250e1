"""Exception hierarchy shared across the package."""


class WesterveltError(Exception):
    """Base class for all package errors."""


class ConfigError(WesterveltError, ValueError):
    """Invalid grid, parameter or run configuration.

    ``problems`` holds every individual complaint so callers can report all
    of them at once instead of failing on the first.
    """

    def __init__(self, message, problems=None):
        self.problems = list(problems) if problems else [message]
        super().__init__(message)


class SolverError(WesterveltError):
    """Failure while advancing the nonlinear system in time."""

    def __init__(self, message, t=None, report=None):
        super().__init__(message)
        self.t = t
        self.report = report


class DegeneracyError(SolverError, ValueError):
    """The coefficient c^-2 - 2 gamma u dropped below the degeneracy floor."""


class NewtonDivergence(SolverError):
    """Newton iteration hit its cap or its residual grew twice in a row."""


class EigensolverFailure(WesterveltError):
    pass


class RankToleranceAmbiguous(WesterveltError):
    """Singular values straddle the rank tolerance band."""


class EnforcementFailure(WesterveltError):
    pass


class FitUnreliable(WesterveltError):
    pass


class ProbeAmbiguous(WesterveltError):
    pass
