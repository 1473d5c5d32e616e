"""Performance regression with from-scratch neural networks on tabular benchmark results."""

from .errors import ConfigError, SchemaError, TrainingAborted

__all__ = ["ConfigError", "SchemaError", "TrainingAborted"]
__version__ = "0.1.0"
