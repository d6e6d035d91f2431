"""Exception types raised across the package."""


class ValuationError(Exception):
    """Base class for all package errors."""


class NoDelimiter(ValuationError):
    pass


class EmptyName(ValuationError):
    pass


class EmptySuffix(ValuationError):
    pass


class MissingParty(ValuationError):
    pass


class MissingRate(ValuationError):
    pass


class EmptyInput(ValuationError):
    pass


class ShapeMismatch(ValuationError):
    pass


class NonPositiveWeight(ValuationError):
    pass


class NonPositiveValue(ValuationError):
    pass


class InvalidBounds(ValuationError):
    pass


class SchemaMismatch(ValuationError):
    pass


class SequenceTooLong(ValuationError):
    pass


class SchemaViolation(ValuationError):
    """A record in an input file does not match the transaction schema."""


class MalformedLine(ValuationError):
    def __init__(self, path, line_no, line):
        super().__init__(f"{path}:{line_no}: malformed line {line!r}")
        self.path = path
        self.line_no = line_no


class NegativeCount(MalformedLine):
    pass
