"""Exception types shared across the package."""


class MossError(Exception):
    """Base class for all package errors."""


class ConfigError(MossError, ValueError):
    """Invalid configuration, shapes, or parameter ranges."""


class InvalidBatchError(MossError, ValueError):
    """A batch is too small or malformed for the requested operation."""


class TrainingError(MossError, RuntimeError):
    """Non-finite values or other numeric faults during training."""


class ScheduleError(MossError, ValueError):
    """A mode schedule was queried outside its domain."""


class EnvironmentFault(MossError, RuntimeError):
    """The environment produced a non-finite state."""


class NotReadyError(MossError):
    """The replay buffer cannot yet produce a valid sample."""


class CheckpointError(MossError):
    """A checkpoint is malformed or incompatible with the requested run."""
