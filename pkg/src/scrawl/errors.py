"""Exception types shared across the package."""


class ShapeError(ValueError):
    """An array argument has the wrong shape or width."""


class NumericError(ArithmeticError):
    """A computation produced non-finite values."""


class TrainingError(RuntimeError):
    """Training diverged or was mis-configured."""


class SimulationError(RuntimeError):
    """The simulated plant left its sane operating envelope."""


class RolloutError(RuntimeError):
    """An autonomous rollout could not be completed."""


class ConfigError(ValueError):
    """A configuration file or override is invalid."""
