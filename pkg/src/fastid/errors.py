"""Exception types shared across the package."""


class FastIdError(Exception):
    """Base class for all errors raised by this package."""


class CodecError(FastIdError):
    """Invalid genotype codes, hex text, or word arrays."""


class CorruptProfileError(CodecError):
    """Nonzero bits found in the zero-padding region of a packed profile."""


class PanelFormatError(FastIdError):
    """Panel file violates the on-disk format (header, lengths, ids)."""


class PanelMismatchError(FastIdError):
    """Two panels are not comparable (bit length or word width differ)."""


class InfeasiblePlanError(FastIdError):
    """The memory budget cannot hold even a minimal batch."""

    def __init__(self, message: str, min_feasible_bytes: int):
        super().__init__(message)
        self.min_feasible_bytes = min_feasible_bytes


class PipelineAbortError(FastIdError):
    """The reference source failed mid-job; partial results were discarded."""

    def __init__(self, message: str, completed_batches: int):
        super().__init__(message)
        self.completed_batches = completed_batches
