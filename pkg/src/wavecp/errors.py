"""Exception types shared across the package."""


class WavecpError(Exception):
    """Base class for package errors."""


class ShapeError(WavecpError, ValueError):
    """Array shape does not match a layer or network contract.

    ``layer`` holds the zero-based layer index when the mismatch was
    detected inside a network, else None.
    """

    def __init__(self, message, layer=None):
        if layer is not None:
            message = f"layer {layer}: {message}"
        super().__init__(message)
        self.layer = layer


class NumericsError(WavecpError, ArithmeticError):
    """A forward or backward pass produced a non-finite value."""

    def __init__(self, message, layer=None):
        if layer is not None:
            message = f"layer {layer}: {message}"
        super().__init__(message)
        self.layer = layer


class ConfigError(WavecpError, ValueError):
    """Invalid experiment or training configuration."""


class DataFormatError(WavecpError, ValueError):
    """Malformed external data (CSV, corpus files)."""
