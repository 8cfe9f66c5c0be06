"""Exception hierarchy shared across the package.

Three families map onto the CLI exit codes: configuration problems (bad
parameters, unknown config keys), data problems (parsing, empty datasets,
shape mismatches), and numeric failures (non-SPD systems, rank deficiency,
failed convergence).
"""


class ImplicitSlimError(Exception):
    """Base class for all package errors."""


class ConfigError(ImplicitSlimError):
    """Invalid configuration: unknown keys, unparseable or out-of-range values."""

    exit_code = 2


class ParameterError(ConfigError):
    """A numeric hyperparameter violates its precondition (e.g. lambda <= 0)."""


class DataError(ImplicitSlimError):
    """Invalid or inconsistent input data."""

    exit_code = 3


class ParseError(DataError):
    """Malformed input file; carries the offending line number when known."""

    def __init__(self, message, line_number=None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


class EmptyDatasetError(DataError):
    """An operation produced or received a matrix with no interactions."""


class SplitError(DataError):
    """The dataset cannot be partitioned as requested."""


class ShapeError(DataError):
    """Matrix dimensions do not line up."""


class ContractError(DataError):
    """An input matrix fails the structural contract the operation requires."""


class NumericError(ImplicitSlimError):
    """A numeric routine failed (non-SPD system, singular solve, no convergence)."""

    exit_code = 4


class NotPositiveDefiniteError(NumericError):
    """Symmetric factorization hit a non-positive pivot."""


class RankError(NumericError):
    """Input rows/columns are linearly dependent where independence is required."""


class DegenerateInputError(NumericError):
    """A denominator that must be nonzero vanished."""
