"""Exception types shared across the package."""


class WMRError(Exception):
    """Base class for every error raised by this package."""


class ShapeError(WMRError, ValueError):
    pass


class NumericalError(WMRError, ArithmeticError):
    """A non-finite value appeared where training must not continue."""


class ConfigError(WMRError, ValueError):
    pass


class CheckpointError(WMRError):
    pass


class TrajectoryFormatError(WMRError, ValueError):
    def __init__(self, message: str, row: int | None = None):
        self.row = row
        super().__init__(f"row {row}: {message}" if row is not None else message)


class SimulationError(WMRError):
    pass


class DataError(WMRError, ValueError):
    """Training data breaks a precondition, e.g. a contact target outside {0, 1}."""
