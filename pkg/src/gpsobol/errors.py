"""Exception hierarchy shared by all gpsobol modules."""


class GpsobolError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(GpsobolError):
    """Invalid run configuration or malformed input declaration."""


class ShapeMismatch(GpsobolError, ValueError):
    pass


class DimensionUnsupported(GpsobolError, ValueError):
    pass


class DomainError(GpsobolError, ValueError):
    """Input point lies outside the domain of a function."""


class NumericalDomain(GpsobolError, ValueError):
    """Non-finite input to a numerical routine."""


class NumericalError(GpsobolError):
    """Base class for failures of the numerical stages (CLI exit code 4)."""


class IllConditionedKernel(NumericalError):
    def __init__(self, message, jitter=None):
        super().__init__(message)
        self.jitter = jitter


class FitFailed(NumericalError):
    """All optimizer restarts failed; ``diagnostics`` holds one entry per restart."""

    def __init__(self, message, diagnostics=()):
        super().__init__(message)
        self.diagnostics = list(diagnostics)


class DegenerateVariance(NumericalError, ValueError):
    """Output variance too small to normalise by (a constant model)."""


class DesignIncomplete(GpsobolError, ValueError):
    pass


class SchemaError(GpsobolError, ValueError):
    pass


class ParseError(GpsobolError, ValueError):
    def __init__(self, row, col, detail=""):
        super().__init__(f"cannot parse cell at row {row}, column {col!r}: {detail}")
        self.row = row
        self.col = col


class ModelEvaluationError(GpsobolError):
    """One or more rows of a batch failed (CLI exit code 3)."""

    def __init__(self, message, failures=()):
        super().__init__(message)
        self.failures = list(failures)
