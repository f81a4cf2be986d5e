"""Exception types raised by qmulti."""


class QMultiError(ValueError):
    """Base class for all library errors."""


class DimensionError(QMultiError):
    pass


class NotHermitianError(QMultiError):
    pass


class NotPSDError(QMultiError):
    pass


class ValidationError(QMultiError):
    """An object failed one or more of its invariants.

    ``problems`` lists one human-readable line per violated invariant and
    ``residual`` carries the completeness residual matrix when relevant.
    """

    def __init__(self, problems, residual=None):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        self.residual = residual
        super().__init__("; ".join(self.problems))


class NotSurjectiveError(QMultiError):
    pass


class StructureError(QMultiError):
    """Outcome spaces, axes or factor annotations do not line up."""


class NotApplicableError(QMultiError):
    """A construction's preconditions do not hold (not a proof of impossibility)."""


class MeasurementMismatchError(QMultiError):
    def __init__(self, message, deviation):
        self.deviation = deviation
        super().__init__(message)


class VanishingDistributionError(QMultiError):
    pass
