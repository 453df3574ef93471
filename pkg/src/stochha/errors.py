"""Exception hierarchy shared by all stochha modules."""

from __future__ import annotations


class StochhaError(Exception):
    """Base class for every error raised by the toolkit."""


class ModelError(StochhaError):
    """A model is structurally inconsistent."""


class InvariantViolation(StochhaError):
    pass


class JumpDisabled(StochhaError):
    pass


class InvalidParameter(StochhaError):
    """A distribution parameter resolved to an illegal value."""


class ExhaustedSupport(StochhaError):
    """Conditioning on an elapsed time that leaves no probability mass."""


class QuadratureFailure(StochhaError):
    pass


class KernelError(StochhaError):
    """A composed jump kernel does not define a distribution over enabled edges."""


class TimelockError(StochhaError):
    """The dwell time is bounded but no forced edge can leave the location."""


class RaceViolation(StochhaError):
    """Zero or several enabled edges carry the winning label."""


class LabelRangeError(StochhaError):
    pass


class DepthLimit(StochhaError):
    pass


class UnsupportedSize(StochhaError):
    pass


class UnsupportedModel(StochhaError):
    pass


class MappingError(StochhaError):
    pass


class ParseError(StochhaError):
    """Syntax error in a model document; carries a 1-based source position."""

    def __init__(self, message: str, line: int = 0, column: int = 0):
        self.message = message
        self.line = line
        self.column = column
        super().__init__(f"{line}:{column}: {message}")


class ResolutionError(ParseError):
    """A name in a model document does not resolve."""
