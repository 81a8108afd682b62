"""Exception hierarchy shared by all modules."""


class MaxstopError(Exception):
    """Base class for every error raised by this package."""


class InvalidParam(MaxstopError, ValueError):
    pass


class AssumptionViolated(MaxstopError, ValueError):
    """Model constants break the standing assumption (sigma^2 < r + mu, sigma^2 >= mu)."""


class DomainError(MaxstopError, ValueError):
    pass


class SingularityError(MaxstopError, ArithmeticError):
    """Evaluation too close to a pole of the boundary ODE."""


class StepFailure(MaxstopError, RuntimeError):
    """Adaptive step size underflowed away from any known pole."""


class ShootingFailure(MaxstopError, RuntimeError):
    pass


class ExtrapolationError(MaxstopError, ValueError):
    pass


class NoConvergence(MaxstopError, RuntimeError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class EmptyContact(MaxstopError, RuntimeError):
    pass


class ConfigError(MaxstopError, ValueError):
    pass
