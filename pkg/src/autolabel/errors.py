"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class AutolabelError(Exception):
    exit_code = 1


class InputError(AutolabelError):
    """Unreadable or malformed input data."""

    exit_code = 2


class ConfigurationError(AutolabelError):
    """Parameters that cannot be honoured for the given data."""

    exit_code = 2


class ContractError(AutolabelError):
    """Mismatched shapes or lengths between cooperating objects."""

    exit_code = 3


class ShapeError(ContractError):
    pass


class NumericError(AutolabelError):
    exit_code = 3


class TrainingError(AutolabelError):
    """Non-finite loss or gradient during training."""

    exit_code = 4

    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch
