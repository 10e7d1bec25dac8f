"""scrawl: a desk-scale handwriting-robot laboratory.

A two-arm bilateral teleoperation simulator writes characters on a small
board, demonstrations recorded from it train fast low-level policies under
a slow reference replay, and an optional output-error feedback term corrects
the replay during autonomous writing.  Everything downstream (datasets,
training, rollouts, metrics, reports) is driven by one seeded CLI.
"""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    NumericError,
    RolloutError,
    ShapeError,
    SimulationError,
    TrainingError,
)

__all__ = [
    "__version__",
    "ConfigError",
    "NumericError",
    "RolloutError",
    "ShapeError",
    "SimulationError",
    "TrainingError",
]
