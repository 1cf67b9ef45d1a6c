"""Exception hierarchy shared by every module."""


class VleedError(Exception):
    """Base class for all package errors."""


class ContractError(VleedError, ValueError):
    """A caller violated a documented precondition (shapes, ranges, labels)."""


class NumericError(VleedError, ArithmeticError):
    """A computation produced a non-finite or degenerate value."""


class StaleTapeError(VleedError, RuntimeError):
    """Backward was requested on a graph whose parameters changed since forward."""


class ConfigError(VleedError, ValueError):
    """Invalid configuration or dataset for the requested operation."""


class FormatError(VleedError, ValueError):
    """A binary or text file does not follow the expected layout."""


class TrainingAborted(NumericError):
    """Training hit a non-finite loss; carries the epoch and batch position."""

    def __init__(self, message, epoch=None, batch=None):
        super().__init__(message)
        self.epoch = epoch
        self.batch = batch
