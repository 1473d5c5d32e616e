class ConfigError(ValueError):
    """Invalid architecture, grid or pipeline configuration."""


class SchemaError(ConfigError):
    """Input data does not have the expected columns or layout."""


class TrainingAborted(RuntimeError):
    """Training produced a non-finite loss."""

    def __init__(self, message, *, config=None, epoch=None, batch=None):
        super().__init__(message)
        self.config = config
        self.epoch = epoch
        self.batch = batch
