"""Exception types raised across the toolkit."""


class VadetError(Exception):
    """Base class for all toolkit errors."""


class InvalidInputError(VadetError):
    """An argument violates a precondition (empty, non-finite, mismatched shape)."""


class InvalidPassageError(VadetError):
    """A recorded passage cannot be labeled (e.g. non-positive peak spacing)."""


class OutOfRangeError(VadetError):
    """A computed crossing index falls outside the recording."""


class InvalidLabelsError(VadetError):
    """A label set is internally inconsistent (e.g. duplicate crossing index)."""


class DurationTooShortError(VadetError):
    """A synthetic recording ends while an axle is still on the bridge."""


class ScaleTooLargeError(VadetError):
    """A wavelet scale whose discretized support vastly exceeds the signal."""


class WindowTooShortError(VadetError):
    """A transform window with fewer samples than the scale axis."""


class ConfigError(VadetError):
    """A run configuration that cannot be executed as given."""


class TrainingDivergedError(VadetError):
    """Non-finite loss encountered during optimization."""
