"""Visual-word image classification: detect, describe, cluster, encode, kernel SVM."""

from .errors import (
    ConfigError,
    DataError,
    NumericalError,
    PipelineError,
    VisualWordsError,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DataError",
    "NumericalError",
    "PipelineError",
    "VisualWordsError",
    "__version__",
]
