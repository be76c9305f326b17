"""
Planner orchestrator - runs the two-phase bitwidth search.

Phase 1 clusters layers by weight standard deviation with a size-penalized k-means and
maps clusters to bitwidths, raising the penalty λ each round until at least one of
accuracy and metric is inside its buffer. Phase 2 moves individual layers by ±2 bits,
guided by the normalized-KL sensitivity score, until both targets hold.
"""
import logging
import time
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from apps.core.exceptions import TrainingDivergedError
from apps.core.logging_config import get_logger
from apps.core.tracing import PlannerTracing
from apps.engine.engine import collect_layer_inputs
from apps.engine.evaluation import evaluate_accuracy
from apps.engine.trainer import TrainConfig, calibrate, qat_epochs
from apps.hardware.accounting import bops, model_macs, model_size_bytes
from apps.network.datasets import Dataset
from apps.network.graph import ModelGraph
from apps.planner.budget import SearchBudget
from apps.planner.moves import BIT_STEP, apply_moves, choose_moves, decrease_candidates, increase_candidates
from apps.planner.plan import BitPlan, assign_bitwidths
from apps.planner.targets import (
    TargetMetric,
    Targets,
    both_outside_buffers,
    classify_zone,
    phase1_should_continue,
    targets_met,
)
from apps.planner.trace import PlanTrace, move_action
from apps.quantization.clustering import adaptive_kmeans
from apps.quantization.stats import activation_normalized_kl, layer_sigma, sensitivity_scores

logger = logging.getLogger(__name__)

ACT_SAMPLE_INPUTS = 256
ACT_SAMPLE_VALUES = 16384


class PlanStatus(str, Enum):
    TARGET_MET = 'TargetMet'
    INFEASIBLE = 'Infeasible'
    REVERTED = 'Reverted'


@dataclass(frozen=True)
class PlanningData:
    train: Dataset
    evaluation: Dataset
    calibration: Dataset


@dataclass(frozen=True)
class Measurement:
    accuracy: float
    size_bytes: int
    bops: int

    def metric(self, targets: Targets) -> float:
        return float(self.size_bytes if targets.target_metric == TargetMetric.SIZE else self.bops)


@dataclass
class PlanState:
    plan: BitPlan
    model: ModelGraph
    measurement: Measurement
    round: int


@dataclass
class PlannerResult:
    plan: BitPlan
    model: ModelGraph
    trace: PlanTrace
    status: PlanStatus
    measurement: Measurement
    phase1_measurement: Measurement
    qat_epochs: int = 0
    qat_seconds: float = 0.0
    targets: Optional[Targets] = None

    @property
    def mean_epoch_seconds(self) -> float:
        return self.qat_seconds / self.qat_epochs if self.qat_epochs else 0.0


@dataclass
class _Timing:
    epochs: int = 0
    seconds: float = 0.0


def _gap(measurement: Measurement, targets: Targets, metric_violated: bool) -> float:
    if metric_violated:
        return measurement.metric(targets) - targets.metric
    return targets.accuracy - measurement.accuracy


def _rank(measurement: Measurement, targets: Targets) -> tuple:
    """Sort key for restoring the best state: more targets met, then smaller relative gap."""
    met = int(measurement.accuracy >= targets.accuracy) + int(measurement.metric(targets) <= targets.metric)
    gap = (
        max(0.0, targets.accuracy - measurement.accuracy) / targets.accuracy
        + max(0.0, measurement.metric(targets) - targets.metric) / targets.metric
    )
    return (-met, gap)


class SigmaQuantPlanner:
    """
    Runs both planning phases for one model and records every step in a PlanTrace.
    The planner owns the trace; every round ends with a trace record.
    """

    def __init__(
        self,
        data: PlanningData,
        targets: Targets,
        budget: SearchBudget,
        train_config: TrainConfig,
        seed: int,
        correlation_id: str = '',
    ):
        self.data = data
        self.targets = targets
        self.budget = budget
        self.train_config = train_config
        self.seed = seed
        self.correlation_id = correlation_id
        self.trace = PlanTrace()
        self.timing = _Timing()
        self.log = get_logger(__name__, correlation_id).bind(seed=seed, target_metric=targets.target_metric.value)

    # Measurement and one calibrate + QAT + evaluate round

    def measure(self, model: ModelGraph, plan: BitPlan) -> Measurement:
        report = evaluate_accuracy(model, self.data.evaluation, plan)
        return Measurement(
            accuracy=report.top1_accuracy,
            size_bytes=model_size_bytes(model, plan),
            bops=bops(model, plan),
        )

    def _calibrate(self, model: ModelGraph, plan: BitPlan) -> BitPlan:
        return calibrate(model, self.data.calibration, plan, seed=self.seed)

    def _round(self, model: ModelGraph, plan: BitPlan, epochs: int, round_index: int):
        plan = self._calibrate(model, plan)
        cfg = self.train_config.model_copy(update={'epochs': epochs, 'seed': self.seed * 1000 + round_index})
        start = time.perf_counter()
        model = qat_epochs(model, plan, self.data.train, cfg, self.correlation_id)
        self.timing.seconds += time.perf_counter() - start
        self.timing.epochs += epochs
        return model, plan, self.measure(model, plan)

    def _record(self, phase: str, state: PlanState, action: str, lam=None, status: str = '', exhausted=False):
        m = state.measurement
        zone = classify_zone(m.accuracy, m.metric(self.targets), self.targets, rounds_exhausted=exhausted)
        return self.trace.record(
            phase=phase,
            plan=state.plan,
            accuracy=m.accuracy,
            size_bytes=m.size_bytes,
            bops=m.bops,
            zone=zone.value,
            action=action,
            lam=lam,
            status=status,
        )

    # Phase 1

    def start(self, model: ModelGraph) -> PlanState:
        """Uniform 8-bit start, calibrated and evaluated without QAT."""
        plan = self._calibrate(model, BitPlan.uniform(model))
        state = PlanState(plan, model, self.measure(model, plan), round=0)
        state.round = self._record('P1', state, 'start').round
        return state

    def phase1(self, state: PlanState) -> tuple[PlanState, Optional[PlanStatus]]:
        """
        Clustering rounds while both metrics are outside their buffers.

        Returns the state after the last round and INFEASIBLE when both metrics are still
        outside their buffers once the round cap is reached.
        """
        t = self.targets
        names = [layer.name for layer in state.model.quantizable_layers()]
        rounds = 0
        while phase1_should_continue(state.measurement.accuracy, state.measurement.metric(t), t,
                                     rounds, self.budget.phase1_rounds):
            lam = self.budget.lambda_at(rounds)
            round_index = self.trace.next_round
            PlannerTracing.trace_round_start('P1', round_index, self.correlation_id, 'cluster', lam)
            started = time.perf_counter()

            features = [layer_sigma(layer.weights) for layer in state.model.quantizable_layers()]
            k = min(self.budget.clusters, len(features))
            clusters = adaptive_kmeans(features, k, lam, seed=self.seed + rounds, restarts=self.budget.restarts)
            plan = assign_bitwidths(clusters, names)
            rounds += 1

            try:
                model, plan, measurement = self._round(state.model, plan, self.budget.phase1_epochs, round_index)
            except TrainingDivergedError as e:
                self.log.warning(f"QAT diverged in clustering round: {e}", round=round_index)
                self._record('P1', state, f"revert({state.round})", lam=lam)
                continue

            state = PlanState(plan, model, measurement, round=round_index)
            exhausted = rounds >= self.budget.phase1_rounds
            record = self._record('P1', state, 'cluster', lam=lam, exhausted=exhausted)
            PlannerTracing.trace_round_result(
                'P1', round_index, self.correlation_id, measurement.accuracy,
                measurement.metric(t), record.zone, (time.perf_counter() - started) * 1000,
            )

        if both_outside_buffers(state.measurement.accuracy, state.measurement.metric(t), t):
            self.log.warning("Both metrics outside their buffers after clustering", rounds=rounds)
            return state, PlanStatus.INFEASIBLE
        return state, None

    # Phase 2

    def _activation_scores(self, state: PlanState) -> dict[str, float]:
        sample = self.data.calibration.inputs[:ACT_SAMPLE_INPUTS]
        inputs = collect_layer_inputs(state.model, sample)
        rng = np.random.Generator(np.random.PCG64([self.seed, state.round]))
        scores = {}
        for entry in state.plan:
            values = inputs[entry.name].reshape(-1)
            if values.size > ACT_SAMPLE_VALUES:
                values = values[np.sort(rng.choice(values.size, ACT_SAMPLE_VALUES, replace=False))]
            scores[entry.name] = activation_normalized_kl(values, entry.bits_a, entry.act_lo, entry.act_hi)
        return scores

    def _candidate_moves(self, state: PlanState, increase: bool):
        weight_scores = {r.layer: r.normalized_kl for r in sensitivity_scores(state.model, state.plan)}
        act_scores = None
        if self.targets.target_metric == TargetMetric.BOPS:
            act_scores = self._activation_scores(state)
        if increase:
            return increase_candidates(state.plan, weight_scores, act_scores)
        return decrease_candidates(
            state.plan, weight_scores, model_macs(state.model), self.targets.target_metric, act_scores,
        )

    def phase2(self, state: PlanState) -> tuple[PlanState, PlanStatus]:
        """
        Sensitivity-driven ±2-bit refinement.

        Stops with TARGET_MET once both targets hold. Restores the best recorded state and
        returns REVERTED after `patience` rounds without strict improvement of the violated
        metric, when the round cap is reached, or when no move is left. A round that puts
        both metrics outside their buffers is undone and ends the phase.
        """
        t = self.targets
        stable = state
        best = state
        visited = {state.plan.bits_signature()}
        stale = 0
        rounds = 0

        while True:
            m = state.measurement
            if targets_met(m.accuracy, m.metric(t), t):
                return state, PlanStatus.TARGET_MET
            if rounds >= self.budget.phase2_rounds:
                return self._restore(best, rounds, 'round cap reached'), PlanStatus.REVERTED

            increase = m.accuracy < t.accuracy
            step = BIT_STEP if increase else -BIT_STEP
            verb = 'increase' if increase else 'decrease'
            moves = choose_moves(
                self._candidate_moves(state, increase), self.budget.layers_per_round, state.plan, step, visited,
            )
            if not moves:
                return self._restore(best, rounds, 'no legal move'), PlanStatus.REVERTED

            round_index = self.trace.next_round
            action = move_action(verb, [move.as_pair() for move in moves])
            PlannerTracing.trace_round_start('P2', round_index, self.correlation_id, action)
            started = time.perf_counter()
            plan = apply_moves(state.plan, moves, step)
            visited.add(plan.bits_signature())
            rounds += 1

            try:
                model, plan, measurement = self._round(state.model, plan, self.budget.phase2_epochs, round_index)
            except TrainingDivergedError as e:
                self.log.warning(f"QAT diverged in refinement round: {e}", round=round_index)
                return self._restore(stable, round_index, 'training diverged'), PlanStatus.REVERTED

            gap_before = _gap(m, t, metric_violated=not increase)
            state = PlanState(plan, model, measurement, round=round_index)
            record = self._record('P2', state, action)
            PlannerTracing.trace_round_result(
                'P2', round_index, self.correlation_id, measurement.accuracy,
                measurement.metric(t), record.zone, (time.perf_counter() - started) * 1000,
            )

            if both_outside_buffers(measurement.accuracy, measurement.metric(t), t):
                return self._restore(stable, round_index, 'both metrics outside buffers'), PlanStatus.REVERTED

            stable = state
            if _rank(measurement, t) < _rank(best.measurement, t):
                best = state
            if _gap(measurement, t, metric_violated=not increase) < gap_before:
                stale = 0
            else:
                stale += 1
                if stale >= self.budget.patience:
                    return self._restore(best, round_index, 'no improvement'), PlanStatus.REVERTED

    def _restore(self, target: PlanState, round_index: int, reason: str) -> PlanState:
        PlannerTracing.trace_revert(self.correlation_id, round_index, target.round, reason)
        self._record('P2', target, f"revert({target.round})")
        return target

    # Whole run

    def run(self, model: ModelGraph) -> PlannerResult:
        self.log.info("Planning started", **self.targets.describe())
        state = self.start(model)
        state, status = self.phase1(state)
        phase1_measurement = state.measurement

        phase = 'P1'
        if status is None:
            phase = 'P2'
            state, status = self.phase2(state)

        exhausted = status == PlanStatus.INFEASIBLE
        self._record(phase, state, 'stop', status=status.value, exhausted=exhausted)
        self.log.info(
            f"Planning finished with status {status.value}",
            accuracy=state.measurement.accuracy,
            size_bytes=state.measurement.size_bytes,
            bops=state.measurement.bops,
            rounds=len(self.trace),
        )
        return PlannerResult(
            plan=state.plan,
            model=state.model,
            trace=self.trace,
            status=status,
            measurement=state.measurement,
            phase1_measurement=phase1_measurement,
            qat_epochs=self.timing.epochs,
            qat_seconds=self.timing.seconds,
            targets=self.targets,
        )


def run_sigmaquant(
    model: ModelGraph,
    data: PlanningData,
    targets: Targets,
    budget: SearchBudget,
    seed: int,
    train_config: Optional[TrainConfig] = None,
    correlation_id: str = '',
) -> PlannerResult:
    """Both phases end to end; a pure function of its arguments apart from timing fields."""
    planner = SigmaQuantPlanner(data, targets, budget, train_config or TrainConfig(seed=seed), seed, correlation_id)
    return planner.run(model)


def phase1(
    model: ModelGraph,
    data: PlanningData,
    targets: Targets,
    budget: SearchBudget,
    seed: int,
    train_config: Optional[TrainConfig] = None,
) -> tuple[BitPlan, PlanTrace, Optional[PlanStatus], ModelGraph]:
    """Clustering phase alone; status is INFEASIBLE or None when refinement may follow."""
    planner = SigmaQuantPlanner(data, targets, budget, train_config or TrainConfig(seed=seed), seed)
    state, status = planner.phase1(planner.start(model))
    return state.plan, planner.trace, status, state.model


def phase2(
    model: ModelGraph,
    data: PlanningData,
    plan: BitPlan,
    targets: Targets,
    budget: SearchBudget,
    seed: int,
    train_config: Optional[TrainConfig] = None,
) -> tuple[BitPlan, PlanTrace, PlanStatus, ModelGraph]:
    """Refinement phase alone, starting from `plan` on `model` (calibrated and evaluated first)."""
    planner = SigmaQuantPlanner(data, targets, budget, train_config or TrainConfig(seed=seed), seed)
    plan = planner._calibrate(model, plan)
    state = PlanState(plan, model, planner.measure(model, plan), round=0)
    state.round = planner._record('P2', state, 'start').round
    state, status = planner.phase2(state)
    return state.plan, planner.trace, status, state.model
