"""Exception hierarchy shared by all floodbench modules.

Two user-facing categories map onto CLI exit codes: bad inputs or usage
(exit 2) and method degeneracies discovered while processing valid inputs
(exit 3), e.g. a histogram with no valid threshold cut.
"""


class FloodbenchError(Exception):
    """Base class for all errors raised by this package."""


class InputError(FloodbenchError):
    """Invalid input data, parameters, or file contents (CLI exit 2)."""


class RasterFormatError(InputError):
    """A raster file could not be parsed under its declared format."""


class GeometryError(InputError):
    """Grids entering a multi-raster operation do not share geometry."""


class DegenerateError(FloodbenchError):
    """A method failed on valid input, e.g. no bimodal tiles (CLI exit 3)."""
