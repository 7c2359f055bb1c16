"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Operands have incompatible or invalid shapes."""


class ParseError(ValueError):
    """A text input (label, result, or calibration file) is malformed."""


class FormatError(ValueError):
    """A binary input (depth PNG) is not in the expected format."""


class EvaluationError(ValueError):
    """The evaluation request is undefined, e.g. zero valid ground truth."""
