"""Exception taxonomy shared across the package.

Argument misuse raises plain ValueError. The classes below cover the
conditions that map to dedicated CLI exit codes: data problems
(degenerate sources, malformed files) and numerical failures.
"""


class EstimationError(Exception):
    """Base class for data and numerical errors raised by this package."""


class DegenerateSourceError(EstimationError):
    """A source dataset cannot support estimation (missing or tiny class)."""


class SchemaError(EstimationError):
    """A file or config violates its declared schema."""


class ParseError(SchemaError):
    """A file failed to parse; carries the 1-based line number."""

    def __init__(self, message: str, line_number: int):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class DivisionGuardError(EstimationError):
    """A ratio with a zero denominator was requested (never silently clipped)."""


class NumericalError(EstimationError):
    """Optimization produced a non-finite value; carries the iteration index."""

    def __init__(self, message: str, iteration: int):
        super().__init__(f"iteration {iteration}: {message}")
        self.iteration = iteration
