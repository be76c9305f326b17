"""
Exception types and the command-level exception handler.
"""
import logging
import traceback

from django.core.management.base import CommandError

logger = logging.getLogger(__name__)

# Process exit codes used by the management commands
EXIT_ERROR = 1
EXIT_INFEASIBLE = 2
EXIT_REVERTED = 3


class SigmaQuantError(Exception):
    """Base class for all domain errors."""
    pass


class ManifestError(SigmaQuantError):
    """Raised when a model manifest or one of its blobs cannot be used."""
    pass


class DimensionMismatchError(ManifestError):
    """Raised when a tensor's data does not match its declared dims."""

    def __init__(self, layer: str, message: str):
        self.layer = layer
        super().__init__(f"layer '{layer}': {message}")


class UnknownLayerKindError(ManifestError):
    """Raised for layer kinds the engine does not implement."""
    pass


class ShapeMismatchError(SigmaQuantError):
    """Raised when consecutive layer shapes do not compose."""
    pass


class DatasetFormatError(SigmaQuantError):
    """Raised for malformed IDX files or inconsistent datasets."""
    pass


class ConfigError(SigmaQuantError):
    """Raised when a run configuration is invalid."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)


class ClusteringError(SigmaQuantError):
    """Raised for invalid clustering inputs."""
    pass


class MultiplierRangeError(SigmaQuantError):
    """Raised when a multiplier code does not fit its bitwidth."""
    pass


class CostTableError(SigmaQuantError):
    """Raised when a hardware cost table is incomplete."""
    pass


class TrainingDivergedError(SigmaQuantError):
    """Raised when the training loss becomes non-finite."""

    def __init__(self, epoch: int, step: int):
        self.epoch = epoch
        self.step = step
        super().__init__(f"loss became non-finite at epoch {epoch}, step {step}")


class TraceReplayError(SigmaQuantError):
    """Raised when a trace does not replay to the recorded plan."""
    pass


def handle_command_exception(exc: Exception, context: dict) -> CommandError:
    """
    Map an exception raised inside a management command to a `CommandError`.

    Domain errors keep their message; anything else is logged with its traceback and
    reported generically. `context` carries the command name and run id.
    """
    command = context.get('command', 'unknown')
    correlation_id = context.get('correlation_id')

    if isinstance(exc, CommandError):
        return exc

    if isinstance(exc, SigmaQuantError):
        logger.warning(
            f"Command {command} failed: {exc}",
            extra={
                'correlation_id': correlation_id,
                'extra_data': {'command': command, 'error_type': type(exc).__name__},
            }
        )
        return CommandError(f"{type(exc).__name__}: {exc}", returncode=EXIT_ERROR)

    if isinstance(exc, OSError):
        logger.warning(
            f"Command {command} hit an I/O error: {exc}",
            extra={'correlation_id': correlation_id},
        )
        return CommandError(f"I/O error: {exc}", returncode=EXIT_ERROR)

    logger.error(
        f"Unhandled exception in {command}: {exc}",
        extra={
            'correlation_id': correlation_id,
            'extra_data': {'traceback': traceback.format_exc()},
        }
    )
    return CommandError(f"unexpected error: {exc}", returncode=EXIT_ERROR)
