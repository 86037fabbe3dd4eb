"""Exception types shared across the toolkit."""


class SoelkitError(Exception):
    """Base class for all toolkit errors."""


class FormatError(SoelkitError, ValueError):
    """A file could not be parsed; message carries the offending line."""


class DataValidationError(SoelkitError, ValueError):
    """Input data violates a structural requirement (non-finite values, bad labels)."""


class CapacityError(SoelkitError, ValueError):
    """A request exceeds what the data can support (budget, anomaly supply)."""


class ClassLookupError(SoelkitError, KeyError):
    """A referenced class id or index does not exist."""


class DegenerateDensityError(SoelkitError, ValueError):
    """Kernel density estimate is undefined (all samples identical)."""


class CoverageUndefinedError(SoelkitError, ValueError):
    """Cover radius is undefined because a class is missing from the query set."""

    def __init__(self, missing_class: int):
        self.missing_class = int(missing_class)
        super().__init__(f"query set contains no sample of class {missing_class}")


class DegenerateCentersError(SoelkitError, ValueError):
    """Class centers cannot be formed (a queried class is empty)."""


class NumericalError(SoelkitError, ArithmeticError):
    """A numeric quantity became non-finite; the operation was aborted."""


class StateConflictError(SoelkitError, RuntimeError):
    """An operation is not valid in the current session state."""
