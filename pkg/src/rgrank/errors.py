"""Exception types shared across the package."""


class RgrankError(Exception):
    """Base class for all library-specific errors."""


class ParseError(RgrankError, ValueError):
    """A malformed row in a delimited interaction file."""

    def __init__(self, line_no, message):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class EmptyDatasetError(RgrankError, ValueError):
    """No interactions survived loading/filtering."""


class InvalidScoreError(RgrankError, ValueError):
    """Score vector contains NaN or infinity."""


class InvalidProposalError(RgrankError, ValueError):
    """A sampled object has zero proposal probability."""


class EmptyCandidateError(RgrankError, ValueError):
    """Every object was excluded from a ranking."""


class NonPositiveDefiniteError(RgrankError, RuntimeError):
    """A row system in an alternating solve failed the eigenvalue guard."""

    def __init__(self, row, smallest_eigenvalue, pd_floor):
        super().__init__(
            f"row {row}: system matrix smallest eigenvalue "
            f"{smallest_eigenvalue:.3e} < floor {pd_floor:.3e}; "
            "reduce the interaction coefficient (V / beta) or increase lambda"
        )
        self.row = row
        self.smallest_eigenvalue = smallest_eigenvalue


class DivergedError(RgrankError, RuntimeError):
    """Training produced a non-finite loss."""


class DimensionMismatchError(RgrankError, ValueError):
    """Model, matrix, or snapshot dimensions disagree."""
