"""Exception hierarchy shared by every phasemark module."""


class PhaseMarkError(Exception):
    """Base class for all library errors."""


class FormatError(PhaseMarkError, ValueError):
    """A file or value does not follow the expected format."""


class TruncatedFileError(PhaseMarkError, OSError):
    """A file ended before its declared payload."""


class ShapeError(PhaseMarkError, ValueError):
    """Array dimensions are incompatible with the requested operation."""


class ContractError(PhaseMarkError, ValueError):
    """A caller violated an operation precondition."""


class SymmetryError(PhaseMarkError, ArithmeticError):
    """An inverse transform left an imaginary residual above tolerance."""


class CapacityError(PhaseMarkError, ValueError):
    """The frequency band cannot hold the requested number of blocks."""


class ThresholdError(PhaseMarkError, ValueError):
    """A detection threshold cannot be computed exactly."""
