"""Exception hierarchy shared across the package."""


class LoadflexError(Exception):
    """Base class for all package-specific errors."""


class SignalError(LoadflexError):
    """Raised for malformed or inconsistent incentive signal data."""


class TariffError(LoadflexError):
    """Raised for invalid tariff documents or billing inputs."""


class SpecError(LoadflexError):
    """Raised for invalid flexibility envelopes, schedules, or mismatched horizons."""


class InfeasibleError(LoadflexError):
    """Raised when no schedule satisfies the requested constraints."""


class SolverError(LoadflexError):
    """Raised when a solve cannot be completed (e.g. non-convergence)."""

    def __init__(self, message, iterations=None, max_violation=None):
        super().__init__(message)
        self.iterations = iterations
        self.max_violation = max_violation


class AnalysisError(LoadflexError):
    """Raised for undefined analysis quantities (e.g. zero baselines)."""
