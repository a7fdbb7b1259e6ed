"""Exception hierarchy.

Everything raised on purpose by the package derives from :class:`FactError`,
which lets the CLI map domain failures to exit status 1.
"""


class FactError(Exception):
    """Base class for domain errors."""


class InvalidCount(FactError, ValueError):
    pass


class EmptyDataset(FactError, ValueError):
    pass


class InvalidLabel(FactError, ValueError):
    pass


class InfeasibleCoordinates(FactError, ValueError):
    pass


class DegenerateMarginal(FactError, ValueError):
    """A definition divides by a marginal quantity that vanished."""

    def __init__(self, quantity, message=None):
        self.quantity = quantity
        super().__init__(message or f"degenerate marginal: {quantity} is zero")


class InvalidScores(FactError, ValueError):
    pass


class DefinitionError(FactError, ValueError):
    """Unknown tag, malformed parameter list, or unsupported definition."""


class Infeasible(FactError):
    """No point satisfies the constraints within tolerance.

    ``min_residual`` carries the smallest residual the phase-1 solve reached,
    when known.
    """

    def __init__(self, message="problem is infeasible", min_residual=None):
        self.min_residual = min_residual
        super().__init__(message)


class IterationLimit(FactError):
    pass


class NotRealizable(FactError):
    pass


class DegenerateBaseClassifier(FactError):
    pass


class SchemaError(FactError, ValueError):
    def __init__(self, message, row=None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)
