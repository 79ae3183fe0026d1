"""Exception types shared across the package."""


class CPRSError(Exception):
    """Base class for all package-specific errors."""


class ModelAssumptionError(CPRSError):
    """A parameter set violates the model assumption lambda2 <= lambda1."""


class GeometryMismatchError(CPRSError):
    """Two objects that must share a box geometry do not."""


class ContractViolationError(CPRSError):
    """A coupled pair reached a state excluded by the claimed contract."""


class AbsorbingStateError(CPRSError):
    """No transition has positive rate; the chain cannot move."""


class DomainError(CPRSError):
    """A density vector leaves the admissible simplex."""


class NumericalInstabilityError(CPRSError):
    """An integration left the admissible region beyond tolerance."""


class ScheduleSizeError(CPRSError):
    """A sampled event schedule would exceed the configured memory cap."""
