"""Exception types raised across the package."""


class SpdcSourceError(Exception):
    """Base class for every error raised by spdcsource."""


class DispersionRangeError(SpdcSourceError, ValueError):
    """A wavelength or temperature lies outside a dispersion model's validity."""


class ConfigurationError(SpdcSourceError, ValueError):
    """Invalid configuration: unknown material, malformed config file, bad field."""


class NotPhaseMatchedError(SpdcSourceError):
    """No phase-matched signal/idler pair exists in the search window.

    ``edge_signs`` holds the sign of the phase mismatch at the two window edges.
    """

    def __init__(self, message, edge_signs=(0, 0)):
        super().__init__(message)
        self.edge_signs = tuple(edge_signs)


class TruncatedSpectrumError(SpdcSourceError, ValueError):
    """The half-maximum level of a spectral lobe is not bracketed by the grid."""


class ArgumentError(SpdcSourceError, ValueError):
    """Invalid argument passed to an operation (empty grid, negative power...)."""
