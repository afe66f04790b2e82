"""Exception types shared across the package."""


class CoherankError(Exception):
    """Base class for all package-specific errors."""


class ParseError(CoherankError):
    """A dataset file line could not be parsed."""

    def __init__(self, message, path=None, line_no=None):
        loc = f"{path}:{line_no}: " if path is not None else ""
        super().__init__(f"{loc}{message}")
        self.path = path
        self.line_no = line_no


class DuplicateIdError(CoherankError):
    """An identifier appears more than once where uniqueness is required."""


class ClusterError(CoherankError):
    """A query cluster violates the one-canonical-per-cluster rule."""


class FormatError(CoherankError):
    """A run file violates the rank/score layout rules."""


class InvalidTripletError(CoherankError):
    """A training example lists inconsistent positive/negative documents."""


class ShapeError(CoherankError):
    """Tensor operands have incompatible shapes."""


class DegenerateRowError(CoherankError):
    """A vector with (near-)zero Euclidean norm cannot be normalized."""


class DegenerateCentroidError(DegenerateRowError):
    """The mean of the supplied query embeddings has (near-)zero norm."""


class NumericalError(CoherankError):
    """A computation produced non-finite values."""


class InvalidTokenError(CoherankError):
    """An empty token cannot be hashed."""


class EmptyTextError(CoherankError):
    """A text produced zero tokens and cannot be encoded."""


class InvalidBatchError(CoherankError):
    """A loss batch has no usable candidates or too few rows."""


class MissingVariantsError(CoherankError):
    """A training mode requires query variants that the dataset lacks."""


class InvalidRankingError(CoherankError):
    """A ranked list contains duplicate items."""


class InvalidSelectionError(CoherankError):
    """A selected document is not a member of its own top-k list."""


class GenerationError(CoherankError):
    """The synthetic generator could not satisfy its constraints."""


class UsageError(CoherankError):
    """The command line was invoked with inconsistent arguments."""
