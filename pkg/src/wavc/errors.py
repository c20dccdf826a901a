"""Exception types raised across the toolkit."""


class WavcError(Exception):
    """Base class for all toolkit errors."""


class CaseError(WavcError):
    """Malformed or inconsistent case description."""


class ZeroImpedanceError(CaseError):
    """A branch with r = x = 0 was offered for admittance assembly."""


class PowerFlowError(WavcError):
    """Newton power flow failed to converge or hit a singular Jacobian."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class IntegrationDivergedError(WavcError):
    """The simulated state became non-finite."""

    def __init__(self, message, bus=None, t=None):
        super().__init__(message)
        self.bus = bus
        self.t = t


class InsufficientDataError(WavcError):
    pass


class SingularMatrixError(WavcError):
    pass


class IllConditionedError(WavcError):
    pass


class UnidentifiableError(WavcError):
    """Regression has no excitation for the named bus."""

    def __init__(self, message, bus=None):
        super().__init__(message)
        self.bus = bus


class RankDeficientError(WavcError):
    def __init__(self, message, rank=None):
        super().__init__(message)
        self.rank = rank


class PartitionError(WavcError):
    pass


class ControllerSkip(WavcError):
    """A control tick could not be assembled; the tick is skipped, not the run."""
