class SteinBlockError(ValueError):
    """Base class for every error raised by steinblock."""


class InvalidParameterError(SteinBlockError):
    pass


class MissingNoiseScaleError(SteinBlockError):
    pass


class LayoutError(SteinBlockError):
    """Coefficient layout does not match what an operation expects."""


class FormatError(SteinBlockError):
    """A coefficient file could not be parsed.

    ``record`` is the index of the offending header/data record (or None when
    the failure is not tied to one record), ``offset`` the byte offset.
    """

    def __init__(self, message, record=None, offset=None):
        where = []
        if record is not None:
            where.append(f"record {record}")
        if offset is not None:
            where.append(f"byte {offset}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
        self.record = record
        self.offset = offset


class ExtentMismatchError(FormatError):
    """Declared extents/counts disagree with the data actually present."""
