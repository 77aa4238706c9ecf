"""Mixture-of-surprises unsupervised skill pretraining at desk scale."""

from moss.config import RunConfig, make_config
from moss.errors import (CheckpointError, ConfigError, EnvironmentFault, InvalidBatchError, MossError,
                         NotReadyError, ScheduleError, TrainingError)

__version__ = "0.1.0"

__all__ = [
    "RunConfig", "make_config", "MossError", "ConfigError", "InvalidBatchError", "TrainingError",
    "ScheduleError", "EnvironmentFault", "NotReadyError", "CheckpointError", "__version__",
]
