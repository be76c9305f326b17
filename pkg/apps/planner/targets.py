"""
Planning targets, decision zones and the loop predicates of both phases.
"""
import logging
from enum import Enum
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field

logger = logging.getLogger(__name__)

DEFAULT_ACCURACY_DROP = 1.0
DEFAULT_DELTA_A = 1.0
DEFAULT_METRIC_FRACTION = 0.75
DEFAULT_DELTA_M_FRACTION = 0.05

PRESET_FRACTIONS = {
    'conservative': 0.85,
    'balanced': 0.75,
    'aggressive': 0.50,
}


class TargetMetric(str, Enum):
    SIZE = 'size'
    BOPS = 'bops'


class Zone(str, Enum):
    TARGET = 'Target'
    ITERATION = 'Iteration'
    BIT_INCREASE = 'BitIncrease'
    BIT_DECREASE = 'BitDecrease'
    TRANSITION = 'Transition'
    ABANDON = 'Abandon'


class Targets(BaseModel):
    """Absolute targets: accuracy in percent, metric in bytes or BOPs."""
    model_config = ConfigDict(frozen=True, extra='forbid')

    target_metric: TargetMetric = TargetMetric.SIZE
    accuracy: float = Field(gt=0, le=100)
    metric: float = Field(gt=0)
    delta_a: float = Field(default=DEFAULT_DELTA_A, ge=0)
    delta_m: float = Field(ge=0)

    def describe(self) -> dict:
        return {
            'metric': self.target_metric.value,
            'accuracy': self.accuracy,
            'value': self.metric,
            'delta_a': self.delta_a,
            'delta_m': self.delta_m,
        }


class TargetSpec(BaseModel):
    """
    Targets as written in a run config. Absolute values win over relative ones; relative
    values are resolved against the float model by `resolve_targets`.
    """
    model_config = ConfigDict(frozen=True, extra='forbid')

    metric: TargetMetric = TargetMetric.SIZE
    accuracy: Optional[float] = Field(default=None, gt=0, le=100)
    accuracy_drop: float = Field(default=DEFAULT_ACCURACY_DROP, ge=0)
    size_bytes: Optional[float] = Field(default=None, gt=0)
    bops: Optional[float] = Field(default=None, gt=0)
    fraction: Optional[float] = Field(default=None, gt=0)
    preset: Optional[Literal['conservative', 'balanced', 'aggressive']] = None
    delta_a: float = Field(default=DEFAULT_DELTA_A, ge=0)
    delta_m: Optional[float] = Field(default=None, ge=0)

    def metric_fraction(self) -> float:
        if self.fraction is not None:
            return self.fraction
        if self.preset is not None:
            return PRESET_FRACTIONS[self.preset]
        return DEFAULT_METRIC_FRACTION


def resolve_targets(spec: TargetSpec, float_accuracy: float, int8_size: int, int8_bops: int) -> Targets:
    """Absolute Targets from a spec, the float accuracy and the all-8-bit metrics."""
    accuracy = spec.accuracy if spec.accuracy is not None else float_accuracy - spec.accuracy_drop
    accuracy = min(100.0, max(accuracy, 1e-6))
    if spec.metric == TargetMetric.SIZE:
        metric = spec.size_bytes if spec.size_bytes is not None else spec.metric_fraction() * int8_size
    else:
        metric = spec.bops if spec.bops is not None else spec.metric_fraction() * int8_bops
    delta_m = spec.delta_m if spec.delta_m is not None else DEFAULT_DELTA_M_FRACTION * metric
    targets = Targets(
        target_metric=spec.metric,
        accuracy=accuracy,
        metric=metric,
        delta_a=spec.delta_a,
        delta_m=delta_m,
    )
    logger.info("Resolved planning targets", extra={'extra_data': targets.describe()})
    return targets


def accuracy_in_buffer(accuracy: float, t: Targets) -> bool:
    return accuracy >= t.accuracy - t.delta_a


def metric_in_buffer(metric: float, t: Targets) -> bool:
    return metric <= t.metric + t.delta_m


def targets_met(accuracy: float, metric: float, t: Targets) -> bool:
    """Phase-2 stop condition: A >= A_t and M <= M_t."""
    return accuracy >= t.accuracy and metric <= t.metric


def both_outside_buffers(accuracy: float, metric: float, t: Targets) -> bool:
    return not accuracy_in_buffer(accuracy, t) and not metric_in_buffer(metric, t)


def phase1_should_continue(accuracy: float, metric: float, t: Targets, rounds: int, max_rounds: int) -> bool:
    """Phase-1 loop guard: both metrics outside their buffers and rounds left."""
    return both_outside_buffers(accuracy, metric, t) and rounds < max_rounds


def classify_zone(accuracy: float, metric: float, t: Targets, rounds_exhausted: bool = False) -> Zone:
    """
    Ordered rules; the first match wins.

      Target       A >= A_t and M <= M_t
      BitIncrease  A < A_t - ΔA and M <= M_t - ΔM
      BitDecrease  A >= A_t + ΔA and M > M_t + ΔM
      Iteration    A >= A_t - ΔA or M <= M_t + ΔM
      Abandon      both outside the buffers with no rounds left
      Transition   A >= A_t - 2ΔA or M <= M_t + 2ΔM
      BitDecrease  otherwise
    """
    a_t, m_t, da, dm = t.accuracy, t.metric, t.delta_a, t.delta_m
    if accuracy >= a_t and metric <= m_t:
        return Zone.TARGET
    if accuracy < a_t - da and metric <= m_t - dm:
        return Zone.BIT_INCREASE
    if accuracy >= a_t + da and metric > m_t + dm:
        return Zone.BIT_DECREASE
    if accuracy >= a_t - da or metric <= m_t + dm:
        return Zone.ITERATION
    if rounds_exhausted:
        return Zone.ABANDON
    if accuracy >= a_t - 2 * da or metric <= m_t + 2 * dm:
        return Zone.TRANSITION
    return Zone.BIT_DECREASE
