"""Exception hierarchy shared across the package."""


class TouchAuthError(Exception):
    """Base class for all package errors."""


class SchemaError(TouchAuthError):
    """Input file does not match the canonical stroke schema."""


class ConfigError(TouchAuthError):
    """Invalid experiment configuration or CLI arguments."""


class DataInsufficiencyError(TouchAuthError):
    """Not enough eligible users / strokes to run the requested experiment."""


class TrainingError(TouchAuthError):
    """Classifier cannot be fitted on the provided data."""


class InputError(TouchAuthError):
    """Malformed matrix passed to fit/predict (non-finite values, arity mismatch)."""


class SamplingError(TouchAuthError):
    """Impostor pool too small for the requested undersampling."""


class MetricError(TouchAuthError):
    """Metric is undefined for the provided score lists."""
