import pytest
from pydantic import ValidationError

from apps.planner.budget import SearchBudget, estimate_search_cost
from apps.planner.targets import (
    TargetMetric,
    Targets,
    TargetSpec,
    Zone,
    classify_zone,
    phase1_should_continue,
    resolve_targets,
    targets_met,
)

TARGETS = Targets(accuracy=80.0, metric=10.0, delta_a=1.0, delta_m=1.0)

# (accuracy, metric, rounds exhausted, zone, phase-1 continues, targets met)
ZONE_TABLE = [
    (81.0, 9.0, False, Zone.TARGET, False, True),
    (80.0, 10.0, False, Zone.TARGET, False, True),
    (100.0, 5.0, False, Zone.TARGET, False, True),
    (79.5, 12.0, False, Zone.ITERATION, False, False),
    (75.0, 9.5, False, Zone.ITERATION, False, False),
    (80.5, 15.0, False, Zone.ITERATION, False, False),
    (81.0, 11.0, False, Zone.ITERATION, False, False),
    (79.0, 10.0, False, Zone.ITERATION, False, False),
    (50.0, 9.5, False, Zone.ITERATION, False, False),
    (75.0, 8.5, False, Zone.BIT_INCREASE, False, False),
    (50.0, 5.0, False, Zone.BIT_INCREASE, False, False),
    (82.0, 15.0, False, Zone.BIT_DECREASE, False, False),
    (90.0, 50.0, False, Zone.BIT_DECREASE, False, False),
    (70.0, 20.0, False, Zone.BIT_DECREASE, True, False),
    (77.9, 12.1, False, Zone.BIT_DECREASE, True, False),
    (78.5, 11.5, False, Zone.TRANSITION, True, False),
    (77.0, 11.5, False, Zone.TRANSITION, True, False),
    (78.0, 30.0, False, Zone.TRANSITION, True, False),
    (70.0, 20.0, True, Zone.ABANDON, False, False),
    (78.5, 11.5, True, Zone.ABANDON, False, False),
]


@pytest.mark.parametrize('accuracy, metric, exhausted, zone, continues, met', ZONE_TABLE)
def test_zone_table(accuracy, metric, exhausted, zone, continues, met):
    assert classify_zone(accuracy, metric, TARGETS, rounds_exhausted=exhausted) == zone
    rounds = 3 if exhausted else 1
    assert phase1_should_continue(accuracy, metric, TARGETS, rounds, max_rounds=3) is continues
    assert targets_met(accuracy, metric, TARGETS) is met


def test_relative_targets_follow_the_float_model():
    targets = resolve_targets(TargetSpec(), float_accuracy=90.0, int8_size=1000, int8_bops=64000)
    assert targets.accuracy == pytest.approx(89.0)
    assert targets.metric == pytest.approx(750.0)
    assert targets.delta_m == pytest.approx(37.5)
    assert targets.target_metric == TargetMetric.SIZE


@pytest.mark.parametrize('preset, value', [('conservative', 850.0), ('balanced', 750.0), ('aggressive', 500.0)])
def test_presets(preset, value):
    targets = resolve_targets(TargetSpec(preset=preset), 90.0, 1000, 64000)
    assert targets.metric == pytest.approx(value)


def test_explicit_fraction_beats_preset():
    targets = resolve_targets(TargetSpec(preset='aggressive', fraction=0.6), 90.0, 1000, 64000)
    assert targets.metric == pytest.approx(600.0)


def test_bops_target():
    targets = resolve_targets(TargetSpec(metric='bops'), 90.0, 1000, 64000)
    assert targets.metric == pytest.approx(48000.0)
    assert targets.describe()['metric'] == 'bops'


def test_absolute_values_win():
    spec = TargetSpec(accuracy=70.0, size_bytes=400.0, delta_a=0.5, delta_m=10.0, preset='aggressive')
    targets = resolve_targets(spec, 90.0, 1000, 64000)
    assert targets.describe() == {
        'metric': 'size',
        'accuracy': 70.0,
        'value': 400.0,
        'delta_a': 0.5,
        'delta_m': 10.0,
    }


def test_invalid_target_values():
    with pytest.raises(ValidationError):
        TargetSpec(accuracy=120.0)
    with pytest.raises(ValidationError):
        TargetSpec(preset='reckless')


def test_search_cost():
    budget = SearchBudget(phase1_rounds=3, phase1_epochs=4, phase2_rounds=5, phase2_epochs=40)
    assert estimate_search_cost(budget, 1.0) == 212.0
    assert estimate_search_cost(budget.model_copy(update={'phase2_rounds': 0}), 2.0) == 24.0


def test_search_cost_without_rounds():
    budget = SearchBudget(phase1_rounds=0, phase1_epochs=0, phase2_rounds=0, phase2_epochs=0, layers_per_round=0)
    assert estimate_search_cost(budget, 0.0) == 0.0
    with pytest.raises(ValueError):
        estimate_search_cost(budget, -1.0)


def test_lambda_schedule():
    budget = SearchBudget()
    assert [budget.lambda_at(i) for i in range(3)] == [0.1, 0.2, 0.3]


def test_refinement_needs_moves():
    with pytest.raises(ValidationError):
        SearchBudget(phase2_rounds=3, layers_per_round=0)
