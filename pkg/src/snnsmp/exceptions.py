"""Exception hierarchy shared by the library and the command line."""


class SNNError(Exception):
    """Base class for all errors raised by :mod:`snnsmp`."""


class ConfigurationError(SNNError, ValueError):
    """Shapes, dimensions or hyperparameters are inconsistent."""


class PropagationError(SNNError, FloatingPointError):
    """A forward or backward sweep produced a non-finite value."""


class TrainingDiverged(PropagationError):
    """Training hit a non-finite value.

    Carries the 1-based iteration at which it happened together with the
    controls and the log accumulated before that iteration, so callers can
    persist partial results.
    """

    def __init__(self, iteration, message, controls=None, log=None):
        super().__init__(f"iteration {iteration}: {message}")
        self.iteration = iteration
        self.controls = controls
        self.log = log


class DatasetError(SNNError, ValueError):
    """A dataset file is malformed or violates a dataset invariant."""

    def __init__(self, message, record=None):
        if record is not None:
            message = f"record {record}: {message}"
        super().__init__(message)
        self.record = record


class CheckpointError(SNNError):
    """A checkpoint could not be read or does not match the run."""
