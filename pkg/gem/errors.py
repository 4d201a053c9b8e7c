class GemError(ValueError):
    """Base class for every data or model error raised by the toolkit."""


class DataError(GemError):
    """Malformed or invalid input data."""


class FormulaError(GemError):
    """Model formula that does not parse."""


class DesignError(GemError):
    """Design matrix cannot be built (unknown variable, aliased terms)."""


class ModelError(GemError):
    """Fit or analysis preconditions not met."""
