"""Exception hierarchy shared by the engine modules."""


class XvaError(Exception):
    """Base class for all engine errors."""


class InputError(XvaError, ValueError):
    """Invalid numeric input (non-finite rate, negative volatility, ...)."""


class OrderingError(InputError):
    """Time arguments supplied in the wrong order."""


class ConfigError(XvaError):
    """Invalid run configuration or portfolio hierarchy."""


class SimulationError(XvaError):
    """Path simulation produced non-finite values."""


class NumericalError(XvaError):
    """Solver failure (NaN in the driver, non-convergence, ...)."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class AggregationError(XvaError):
    """Reports or surfaces that cannot be combined (different grids, paths)."""
