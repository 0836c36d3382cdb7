"""Exception types shared across the package.

Every error raised by wavehdr code derives from :class:`WaveHdrError` so
callers can catch library failures without also swallowing programming
mistakes like ``TypeError``.
"""


class WaveHdrError(Exception):
    """Base class for all wavehdr exceptions."""


class DimensionError(WaveHdrError):
    """Shapes or axes passed to an operation are inconsistent."""


class GraphError(WaveHdrError):
    """Autodiff graph misuse (e.g. backward from a non-scalar)."""


class ConfigError(WaveHdrError):
    """Invalid configuration value, file, or command-line usage."""


class ParseError(WaveHdrError):
    """A binary or text file did not match its expected format.

    Parameters
    ----------
    message:
        Human-readable description of what went wrong.
    offset:
        Byte offset into the stream at which the failure was detected,
        when known.  ``None`` otherwise.
    """

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class NumericalError(WaveHdrError):
    """A non-finite value surfaced where the math requires finite input."""
