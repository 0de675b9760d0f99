"""Exception taxonomy shared across the package.

Usage-type errors map to CLI exit code 1, numerical errors to exit code 2.
"""


class CtmcError(Exception):
    """Base class for all package errors."""


class UsageError(CtmcError):
    """Invalid inputs, configuration or call contract violations."""


class DimensionError(UsageError):
    """Array arguments with mismatched shapes."""


class SizeLimitError(UsageError):
    """Request exceeds a hard feasibility cap (e.g. exhaustive enumeration)."""


class DomainError(UsageError):
    """Scalar argument outside its mathematical domain."""


class EmptyTraceError(UsageError):
    """Estimator invoked on an empty or too-short trace."""


class InitializationError(UsageError):
    """Sampler started from a state with non-finite energy."""


class NumericalError(CtmcError):
    """A numerical routine failed (factorization, quadrature, ...)."""


class DegenerateWeightsError(NumericalError):
    """All importance weights vanished or became non-finite."""


class DivergenceError(CtmcError):
    """Signal raised by the integrator when a trajectory blows up.

    Samplers treat this as a rejected proposal, never as a fatal error.
    """
