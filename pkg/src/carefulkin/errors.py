"""Exception types raised across the pipeline."""


class ParameterError(ValueError):
    """An argument is outside its valid domain."""


class ParseError(ValueError):
    """A trial or descriptor file could not be parsed."""

    def __init__(self, message, path=None, line=None):
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}"
        super().__init__(f"{where}: {message}" if where else message)
        self.path = path
        self.line = line


class SchemaError(ValueError):
    """A label or metadata field is outside the allowed code set."""


class UnusableTrialError(ValueError):
    """No marker in a trial carries enough valid samples."""


class SegmentationError(ValueError):
    """The velocity profile does not show three qualifying peaks."""


class PaddingOverflowError(ValueError):
    """A sequence is longer than the padded layout allows."""


class DivergenceError(FloatingPointError):
    """Training produced a non-finite loss or activation."""


class DegenerateDataError(ValueError):
    """A statistic is undefined for the given data."""
