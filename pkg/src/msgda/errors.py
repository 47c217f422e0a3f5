"""Exception hierarchy shared by the library and the CLI.

Each error class carries the process exit code the CLI maps it to.
"""


class MinimaxError(Exception):
    exit_code = 1


class InputError(MinimaxError, ValueError):
    """Invalid argument, dimension mismatch or malformed configuration."""

    exit_code = 2


class ConfigError(InputError):
    exit_code = 2


class UnsafeStepsizeError(ConfigError):
    """A stepsize exceeds the range for which the convergence guarantees hold."""


class CertificationError(InputError):
    """Declared regularity constants are inconsistent with the problem data."""


class DivergenceError(MinimaxError, ArithmeticError):
    """Iterates became non-finite or blew up relative to the starting error."""

    exit_code = 3

    def __init__(self, message, global_iter=None, iterate=None, replications=None):
        super().__init__(message)
        self.global_iter = global_iter
        self.iterate = iterate
        self.replications = list(replications) if replications is not None else None


class CapabilityError(MinimaxError):
    """The problem lacks a capability (e.g. a known saddle point) the caller needs."""

    exit_code = 4
