"""Exception taxonomy shared across the package."""


class LocmonoError(Exception):
    """Base class for all package errors."""


class ConformanceError(LocmonoError, ValueError):
    """A state vector does not conform to the grid or mode layout."""


class ParameterError(LocmonoError, ValueError):
    """An operator or control parameter violates its admissible range."""


class NumericDomainError(LocmonoError, ValueError):
    """Non-finite values were fed to a numerical kernel."""


class RangeError(LocmonoError, ValueError):
    """A time argument falls outside the horizon."""


class ConfigError(LocmonoError, ValueError):
    """A configuration file is malformed or violates a constraint.

    The message starts with the offending ``section.key`` path when one
    can be named.
    """


class UsageError(LocmonoError, ValueError):
    """A function or CLI command was invoked in an unsupported way."""


class InsufficientDataError(LocmonoError, ValueError):
    """Not enough iterates/paths to compute the requested diagnostic."""


class DivergenceError(LocmonoError, RuntimeError):
    """A simulated state became non-finite.

    Carries the failing step index and, when known, the path index.
    """

    def __init__(self, step: int, path_index: int | None = None):
        self.step = step
        self.path_index = path_index
        where = f"step {step}"
        if path_index is not None:
            where += f", path {path_index}"
        super().__init__(f"state became non-finite at {where}")


class OptimizationFailure(LocmonoError, RuntimeError):
    """Every cost evaluation diverged; carries the last divergence witness."""

    def __init__(self, witness: DivergenceError):
        self.witness = witness
        super().__init__(f"all cost evaluations diverged (last: {witness})")
