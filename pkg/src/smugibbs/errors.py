"""Exception types shared across the package."""


class SmugibbsError(Exception):
    """Base class for all package errors."""


class NotPositiveDefiniteError(SmugibbsError):
    """A matrix required to be SPD failed its Cholesky factorization."""


class DomainError(SmugibbsError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class InfeasibleStateError(SmugibbsError, RuntimeError):
    """Sampler state violates an invariant (empty truncation region etc.)."""


class UnderflowRateError(SmugibbsError, RuntimeError):
    """Truncated-sampler underflow fallbacks exceeded the allowed rate."""


class RhoOutOfRangeError(SmugibbsError, ValueError):
    """Spatial association parameter outside its admissible interval."""


class InvalidSpecError(SmugibbsError, ValueError):
    """A model or prior specification is inconsistent."""


class ConfigError(SmugibbsError, ValueError):
    """Invalid run configuration; message carries a JSON-pointer-ish path."""

    def __init__(self, pointer: str, message: str):
        self.pointer = pointer
        super().__init__(f"{pointer}: {message}")
