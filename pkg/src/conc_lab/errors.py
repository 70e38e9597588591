"""Exception hierarchy. The CLI maps each class onto an exit code."""


class ConcLabError(Exception):
    exit_code = 1


class ConfigError(ConcLabError, ValueError):
    exit_code = 2


class NumericalError(ConcLabError):
    """Numerical failure: invalid coefficients, failed audits."""

    exit_code = 3


class CertificationError(NumericalError):
    """A Lipschitz/spectral certificate could not be established."""


class SimulationError(NumericalError):
    pass


class NonConvergenceError(ConcLabError):
    exit_code = 4

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = list(history) if history is not None else []
