"""Exception types shared across the toolkit."""


class TrajsenseError(Exception):
    """Base class for all toolkit errors."""


class InvalidStateError(TrajsenseError):
    """A joint state or torque contains non-finite or out-of-contract values."""


class PolicyEvalError(TrajsenseError):
    """Controller evaluation failed; carries the timestep where it happened."""

    def __init__(self, message, timestep=None):
        super().__init__(message)
        self.timestep = timestep


class InvalidShiftError(TrajsenseError):
    """Requested time shift is as long as (or longer than) the trajectory."""


class ConfigError(TrajsenseError):
    """Invalid configuration value or missing config section."""


class DegenerateSignalError(TrajsenseError):
    """Trajectory has zero variance; correlation alignment is undefined."""


class LandmarkMissingError(TrajsenseError):
    """No velocity zero-crossing found; landmark alignment is inapplicable."""


class DatasetError(TrajsenseError):
    """Training pairs are inconsistent (length/dt mismatch, zero perturbation)."""


class InsufficientDataError(TrajsenseError):
    """Fewer than two samples available for a regression fit."""


class FitError(TrajsenseError):
    """Kernel matrix stayed non-positive-definite after jitter escalation."""


class UntrainedTimestepError(TrajsenseError, KeyError):
    """Queried a timestep that no fitted model covers."""


class DegenerateScoreError(TrajsenseError):
    """Score is undefined because the ground truth has zero variance."""


class UndefinedAlignmentError(TrajsenseError):
    """Cosine alignment is undefined for a zero-length vector."""


class TargetUnreachableError(TrajsenseError):
    """Root search found no gain inside the trained range that meets the target.

    Carries the attainable state interval so callers can reformulate.
    """

    def __init__(self, message, attainable_low=None, attainable_high=None):
        super().__init__(message)
        self.attainable_low = attainable_low
        self.attainable_high = attainable_high


class StageError(TrajsenseError):
    """A pipeline stage failed; carries the stage name."""

    def __init__(self, message, stage=None):
        super().__init__(message)
        self.stage = stage


class DependencyError(TrajsenseError):
    """A required upstream artifact is missing from the artifact directory."""
