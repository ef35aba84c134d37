"""Exception hierarchy shared by all ttfr modules."""


class TtfrError(Exception):
    """Base class for every domain error raised by this package."""


class ShapeError(TtfrError):
    """Operand dimensions are incompatible with the requested operation."""


class ParameterError(TtfrError):
    """A scalar parameter or config field is out of its legal range."""


class InputError(TtfrError):
    """Runtime input (tokens, positions, corpora) violates a precondition."""


class PlanError(TtfrError):
    """A growth plan violates its invariants or does not fit the source."""


class UnsupportedError(TtfrError):
    """The operation is not available for this architecture."""


class NumericsError(TtfrError):
    """A kernel produced non-finite values."""


class CheckpointError(TtfrError):
    """Base class for checkpoint container problems."""


class CheckpointFormatError(CheckpointError):
    """Bad magic, bad version, or unparseable header."""


class CheckpointLayoutError(CheckpointError):
    """Tensor offsets overlap, are misaligned, or run past the payload."""


class CheckpointSchemaError(CheckpointError):
    """Tensor names or shapes disagree with the config."""


class CheckpointDataError(CheckpointError):
    """Payload contains non-finite values."""
