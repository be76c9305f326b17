"""
Tracing helpers for planner rounds and long-running stages.
"""
import logging
import time
from contextlib import contextmanager
from typing import Iterator, Optional

logger = logging.getLogger(__name__)


class PlannerTracing:
    """
    Static helpers that log the lifecycle of planning rounds.
    Called programmatically by the planner, the trainer and the hardware report.
    """

    @staticmethod
    def trace_round_start(
        phase: str,
        round_index: int,
        correlation_id: str,
        action: str,
        lam: Optional[float] = None,
    ):
        """Log the start of a planning round."""
        logger.info(
            f"Round {round_index} started: {phase} {action}",
            extra={
                'correlation_id': correlation_id,
                'extra_data': {
                    'phase': phase,
                    'round': round_index,
                    'action': action,
                    'lambda': lam,
                }
            }
        )

    @staticmethod
    def trace_round_result(
        phase: str,
        round_index: int,
        correlation_id: str,
        accuracy: float,
        metric: float,
        zone: str,
        duration_ms: float,
    ):
        """Log the measured outcome of a planning round."""
        logger.info(
            f"Round {round_index} finished in zone {zone}",
            extra={
                'correlation_id': correlation_id,
                'extra_data': {
                    'phase': phase,
                    'round': round_index,
                    'accuracy': round(accuracy, 4),
                    'metric': metric,
                    'zone': zone,
                    'duration_ms': round(duration_ms, 2),
                }
            }
        )

    @staticmethod
    def trace_revert(
        correlation_id: str,
        round_index: int,
        restored_round: int,
        reason: str,
    ):
        logger.warning(
            f"Reverting to round {restored_round}: {reason}",
            extra={
                'correlation_id': correlation_id,
                'extra_data': {
                    'round': round_index,
                    'restored_round': restored_round,
                    'reason': reason,
                }
            }
        )

    @staticmethod
    @contextmanager
    def stage(name: str, correlation_id: str = '', **fields) -> Iterator[dict]:
        """
        Time a stage (training, calibration, report) and log its duration.

        The yielded dict can be filled with result fields that are logged on exit.
        """
        start_time = time.perf_counter()
        result: dict = {}
        success = True
        try:
            yield result
        except Exception:
            success = False
            raise
        finally:
            duration_ms = (time.perf_counter() - start_time) * 1000
            log_method = logger.debug if success else logger.warning
            log_method(
                f"Stage completed: {name}",
                extra={
                    'correlation_id': correlation_id,
                    'extra_data': {
                        'stage': name,
                        'duration_ms': round(duration_ms, 2),
                        'success': success,
                        **fields,
                        **result,
                    }
                }
            )
