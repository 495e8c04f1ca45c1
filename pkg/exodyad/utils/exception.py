import logging
from typing import Optional, Union

import structlog

LoggerType = Union[logging.Logger, structlog.stdlib.BoundLogger, structlog.types.BindableLogger]

ERROR_STRATEGIES = ('raise', 'log', 'ignore')


class ExodyadError(Exception):
    """Root of the package's exceptions. `exit_code` is used by the command line."""

    exit_code = 2


class ConfigError(ExodyadError):
    """A configuration file or override failed to parse or validate."""


class StructuralError(ExodyadError):
    """Input data is missing required entries or has a malformed layout."""


class UndefinedBaselineError(ExodyadError):
    """Normalization against a non-positive baseline."""


class NoStridesError(ExodyadError):
    """Fewer than two heel strikes were found, so no stride can be formed."""


class InfeasibleAllocationError(ExodyadError):
    """The torque allocation constraint set is empty."""


class DivergenceError(ExodyadError):
    """The simulation produced non-finite or runaway state."""

    exit_code = 3

    def __init__(self, message: str, tick: int):
        super().__init__(f"{message} (tick {tick})")
        self.tick = tick


def raise_exception(message: str,
                    error_strategy: str,
                    exception_type: str = 'error',
                    logger: Optional[LoggerType] = None,
                    error_class: type = ExodyadError,
                    **context) -> bool:
    """Helper function to raise / log exceptions based on the configured error strategy.

    Errors are always raised (after logging when the strategy is 'log'). Warnings are
    raised as `RuntimeWarning` under 'raise', logged under 'log' and dropped under 'ignore'.

    Args:
        message (str): Exception Message
        error_strategy (str): Method to handle errors. Can be either 'log', 'raise', or 'ignore'.
        exception_type (str): Type of exception. Can be either 'error' or 'warning'
        logger (optional): Logger used by the 'log' strategy
        error_class (type): Exception class raised for errors
        **context: Key/value pairs attached to the log event

    Returns:
        bool: False when a warning was handled without raising.
    """
    if error_strategy not in ERROR_STRATEGIES:
        raise ConfigError("Error Handling Strategy in settings must be either 'raise', 'log', or 'ignore'!")
    if exception_type not in {'error', 'warning'}:
        raise RuntimeError("Exception type must be either 'error' or 'warning'!")
    if error_strategy == 'log':
        if logger is None:
            raise RuntimeError("Logger must be provided if logging exception")
        if exception_type == 'error':
            logger.error(message, **context)
        else:
            logger.warning(message, **context)
    if exception_type == 'error':
        raise error_class(message)
    if error_strategy == 'raise':
        raise RuntimeWarning(message)
    return False
