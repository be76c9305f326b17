import pytest

from apps.engine.evaluation import evaluate_accuracy
from apps.engine.trainer import TrainConfig, train_float
from apps.hardware.accounting import bops, int8_bops, int8_size_bytes, model_size_bytes
from apps.network.builders import build_mlp
from apps.network.datasets import calibration_subset, gen_synthetic, split_dataset
from apps.planner.baselines import load_baseline, save_baseline, uniform_baseline
from apps.planner.budget import SearchBudget
from apps.planner.orchestrator import PlanningData, PlanStatus, phase1, phase2, run_sigmaquant
from apps.planner.plan import BitPlan
from apps.planner.targets import Targets, TargetSpec, resolve_targets
from apps.planner.trace import parse_snapshot, replay

TRAINING = TrainConfig(epochs=5, seed=0)
BUDGET = SearchBudget(phase1_rounds=2, phase1_epochs=2, phase2_rounds=6, phase2_epochs=2, restarts=2)


def planning_data(separation, seed=0):
    dataset = gen_synthetic(seed=seed, n=400, d=8, classes=4, separation=separation)
    train, evaluation = split_dataset(dataset, 0.2, seed)
    return PlanningData(train, evaluation, calibration_subset(train, 128, seed))


@pytest.fixture(scope='module')
def easy():
    data = planning_data(10.0)
    model = train_float(build_mlp(8, (16,), 4, seed=0), data.train, TRAINING)
    return model, data


def resolved(model, data, spec=TargetSpec()):
    float_acc = evaluate_accuracy(model, data.evaluation).top1_accuracy
    return resolve_targets(spec, float_acc, int8_size_bytes(model), int8_bops(model))


def final_bits(plan):
    return {entry.name: (entry.bits_w, entry.bits_a) for entry in plan}


def test_lenient_targets_keep_the_eight_bit_start(easy):
    model, data = easy
    targets = Targets(accuracy=10.0, metric=10 * int8_size_bytes(model), delta_a=1.0, delta_m=1.0)
    result = run_sigmaquant(model, data, targets, BUDGET, seed=0, train_config=TRAINING)
    assert result.status == PlanStatus.TARGET_MET
    assert set(result.plan.weight_bits().values()) == {8}
    assert [r.action for r in result.trace] == ['start', 'stop']
    assert result.qat_epochs == 0


def test_size_target_is_met_and_verified(easy):
    model, data = easy
    targets = resolved(model, data)
    result = run_sigmaquant(model, data, targets, BUDGET, seed=0, train_config=TRAINING)

    assert result.status == PlanStatus.TARGET_MET
    report = evaluate_accuracy(result.model, data.evaluation, result.plan)
    assert report.top1_accuracy >= targets.accuracy
    assert model_size_bytes(result.model, result.plan) <= targets.metric
    assert result.plan.calibrated
    assert replay(result.trace) == final_bits(result.plan)
    assert result.trace.final.status == 'TargetMet'
    assert result.trace.final.zone == 'Target'


def test_bops_target_is_met(easy):
    model, data = easy
    targets = resolved(model, data, TargetSpec(metric='bops'))
    result = run_sigmaquant(model, data, targets, BUDGET, seed=0, train_config=TRAINING)

    assert result.status == PlanStatus.TARGET_MET
    assert bops(result.model, result.plan) <= targets.metric
    assert replay(result.trace) == final_bits(result.plan)


def test_runs_are_deterministic(easy):
    model, data = easy
    targets = resolved(model, data)
    first = run_sigmaquant(model, data, targets, BUDGET, seed=3, train_config=TRAINING)
    second = run_sigmaquant(model, data, targets, BUDGET, seed=3, train_config=TRAINING)
    assert first.trace.to_csv() == second.trace.to_csv()
    assert first.plan == second.plan


@pytest.fixture(scope='module')
def chance():
    data = planning_data(0.0)
    model = train_float(build_mlp(8, (16,), 4, seed=0), data.train, TRAINING)
    return model, data


def test_unreachable_targets_are_infeasible(chance):
    model, data = chance
    targets = Targets(accuracy=95.0, metric=0.01 * int8_size_bytes(model), delta_a=1.0, delta_m=0.1)
    result = run_sigmaquant(model, data, targets, BUDGET, seed=0, train_config=TRAINING)

    assert result.status == PlanStatus.INFEASIBLE
    clusters = [r for r in result.trace if r.action == 'cluster']
    assert [r.lam for r in clusters] == [0.1, 0.2]
    assert all(r.phase == 'P1' for r in result.trace)
    assert result.trace.final.zone == 'Abandon'
    for record in result.trace:
        assert {bits for pair in parse_snapshot(record.bits).values() for bits in pair} <= {2, 4, 6, 8}


def test_phase_helpers(easy):
    model, data = easy
    lenient = Targets(accuracy=10.0, metric=10 * int8_size_bytes(model), delta_a=1.0, delta_m=1.0)
    plan, trace, status, _ = phase1(model, data, lenient, BUDGET, seed=0, train_config=TRAINING)
    assert status is None
    assert [r.action for r in trace] == ['start']

    plan, trace, status, _ = phase2(model, data, plan, lenient, BUDGET, seed=0, train_config=TRAINING)
    assert status == PlanStatus.TARGET_MET
    assert plan.bits_signature() == BitPlan.uniform(model).bits_signature()


def test_refinement_reverts_without_legal_moves(chance):
    model, data = chance
    # Everything is already at 8 bits and accuracy is short: no increase is possible
    targets = Targets(accuracy=95.0, metric=10 * int8_size_bytes(model), delta_a=1.0, delta_m=1.0)
    plan, trace, status, _ = phase2(model, data, BitPlan.uniform(model), targets, BUDGET, seed=0, train_config=TRAINING)
    assert status == PlanStatus.REVERTED
    assert [r.action for r in trace] == ['start', 'revert(0)']
    assert plan.bits_signature() == BitPlan.uniform(model).bits_signature()


def test_uniform_baseline_rows(easy, tmp_path):
    model, data = easy
    rows = uniform_baseline(model, data, TRAINING, epochs=1, seed=0)
    assert [row.bits for row in rows] == [2, 4, 6, 8]
    assert [row.size_bytes for row in rows] == sorted(row.size_bytes for row in rows)
    assert rows[-1].size_bytes == int8_size_bytes(model)
    save_baseline(rows, tmp_path / 'baseline.csv')
    loaded = load_baseline(tmp_path / 'baseline.csv')
    assert [(r.bits, r.size_bytes, r.bops) for r in loaded] == [(r.bits, r.size_bytes, r.bops) for r in rows]
    assert loaded[-1].accuracy == pytest.approx(rows[-1].accuracy, abs=1e-6)


WIDE_SEEDS = (0, 1, 2)


def wide_run(seed):
    dataset = gen_synthetic(seed=seed, n=2000, d=16, classes=10, separation=3.0)
    train, evaluation = split_dataset(dataset, 0.2, seed)
    data = PlanningData(train, evaluation, calibration_subset(train, 256, seed))
    model = train_float(build_mlp(16, (128, 64), 10, seed=seed), data.train, TrainConfig(seed=seed))
    return model, data


@pytest.fixture(scope='module')
def wide():
    return {seed: wide_run(seed) for seed in WIDE_SEEDS}


@pytest.mark.parametrize('seed', WIDE_SEEDS)
def test_wide_mlp_meets_default_targets(wide, seed):
    model, data = wide[seed]
    targets = resolved(model, data)
    budget = SearchBudget()
    result = run_sigmaquant(model, data, targets, budget, seed=seed, train_config=TrainConfig(seed=seed))

    assert result.status == PlanStatus.TARGET_MET
    report = evaluate_accuracy(result.model, data.evaluation, result.plan)
    assert report.top1_accuracy >= targets.accuracy - targets.delta_a
    assert model_size_bytes(result.model, result.plan) <= targets.metric
    assert replay(result.trace) == final_bits(result.plan)
    assert max(r.round for r in result.trace) <= budget.phase1_rounds + budget.phase2_rounds + 1


def test_half_size_plans_hold_up_against_uniform_four_bit(wide):
    budget = SearchBudget()
    ties_or_better = 0
    for seed in WIDE_SEEDS:
        model, data = wide[seed]
        training = TrainConfig(seed=seed)
        targets = resolved(model, data, TargetSpec(fraction=0.5))
        result = run_sigmaquant(model, data, targets, budget, seed=seed, train_config=training)
        [uniform4] = uniform_baseline(model, data, training, epochs=budget.phase2_epochs, seed=seed, bitset=(4,))

        accuracy = evaluate_accuracy(result.model, data.evaluation, result.plan).top1_accuracy
        assert accuracy >= uniform4.accuracy - targets.delta_a
        ties_or_better += accuracy >= uniform4.accuracy
    assert ties_or_better >= 2
