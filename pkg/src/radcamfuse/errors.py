"""Exception types raised across the package."""


class RadCamFuseError(Exception):
    pass


class OutOfGrid(RadCamFuseError, ValueError):
    """A label or target falls outside the polar grid coverage."""


class FormatError(RadCamFuseError, ValueError):
    pass


class NotFound(RadCamFuseError, FileNotFoundError):
    pass


class ShapeError(RadCamFuseError, ValueError):
    pass


class NumericError(RadCamFuseError, ArithmeticError):
    pass


class ConfigError(RadCamFuseError, ValueError):
    pass


class InvalidTxIndex(RadCamFuseError, ValueError):
    pass


class EmptyDataset(RadCamFuseError, ValueError):
    pass
