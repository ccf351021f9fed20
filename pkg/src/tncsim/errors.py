"""Exception types shared across the engine."""


class TncError(Exception):
    """Base class for all engine errors."""


class TensorError(TncError):
    """Malformed tensor: bad data length, duplicate labels, dim mismatch."""


class InvalidPermutationError(TncError):
    """Target index order is not a permutation of the source order."""


class ContractionError(TncError):
    """Operands cannot be contracted (shared label with mismatched dims)."""


class CircuitParseError(TncError):
    """Circuit text could not be parsed; carries the offending line number."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class NetworkError(TncError):
    """Inconsistent tensor network (index appearing in more than 2 tensors, ...)."""


class SlicingError(TncError):
    """Slice selection cannot satisfy the rank cap."""


class PlanningError(TncError):
    """Reuse planning failed (non-nested lifetimes, missing stem, ...)."""


class MemoryBudgetError(TncError):
    """A checkpoint or intermediate exceeded the configured memory budget."""
