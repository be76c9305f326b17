import pytest

from apps.hardware.accounting import model_size_bytes
from apps.network.builders import build_mlp
from apps.planner.moves import (
    BIT_STEP,
    apply_moves,
    choose_moves,
    decrease_candidates,
    increase_candidates,
)
from apps.planner.plan import BitPlan
from apps.planner.targets import TargetMetric

NAMES = ['fc1', 'fc2', 'fc3']
SCORES = {'fc1': 0.1, 'fc2': 0.5, 'fc3': 0.9}
MACS = {'fc1': 100, 'fc2': 100, 'fc3': 1000}


@pytest.fixture
def plan():
    return BitPlan.from_weight_bits(NAMES, [8, 4, 2])


def test_increase_skips_saturated_layers(plan):
    moves = increase_candidates(plan, SCORES)
    assert [m.as_pair() for m in moves] == [('fc3', 'w'), ('fc2', 'w')]


def test_decrease_prefers_insensitive_layers(plan):
    moves = decrease_candidates(plan, SCORES, MACS, TargetMetric.SIZE)
    assert [m.as_pair() for m in moves] == [('fc1', 'w'), ('fc2', 'w')]


def test_equal_scores_break_ties_by_layer_order():
    plan = BitPlan.from_weight_bits(NAMES, [6, 6, 6])
    moves = decrease_candidates(plan, dict.fromkeys(NAMES, 0.3), MACS, TargetMetric.SIZE)
    assert [m.layer for m in moves] == NAMES


def test_bops_decrease_ranks_by_gain_per_sensitivity(plan):
    act_scores = {'fc1': 0.1, 'fc2': 0.1, 'fc3': 0.1}
    moves = decrease_candidates(plan, SCORES, MACS, TargetMetric.BOPS, act_scores)
    # fc3 activations remove 2*2*1000 BOPs at score 0.1
    assert moves[0].as_pair() == ('fc3', 'a')
    assert {m.kind for m in moves} == {'w', 'a'}
    assert all(m.gain > 0 for m in moves)


def test_size_target_never_moves_activations(plan):
    moves = decrease_candidates(plan, SCORES, MACS, TargetMetric.SIZE, dict.fromkeys(NAMES, 0.0))
    assert {m.kind for m in moves} == {'w'}


def test_moves_change_size_strictly():
    model = build_mlp(8, (16, 16), 4, seed=0)
    plan = BitPlan.uniform(model, bits_w=6)
    lowered = apply_moves(plan, decrease_candidates(plan, SCORES, MACS, TargetMetric.SIZE)[:2], -BIT_STEP)
    raised = apply_moves(plan, increase_candidates(plan, SCORES)[:2], BIT_STEP)
    assert model_size_bytes(model, lowered) < model_size_bytes(model, plan) < model_size_bytes(model, raised)
    assert set(lowered.weight_bits().values()) <= {2, 4, 6, 8}


def test_choose_moves_slides_past_visited_plans(plan):
    candidates = decrease_candidates(plan, SCORES, MACS, TargetMetric.SIZE)
    first = apply_moves(plan, candidates[:1], -BIT_STEP)
    chosen = choose_moves(candidates, 1, plan, -BIT_STEP, {first.bits_signature()})
    assert [m.as_pair() for m in chosen] == [('fc2', 'w')]


def test_choose_moves_gives_up_when_everything_was_seen(plan):
    candidates = decrease_candidates(plan, SCORES, MACS, TargetMetric.SIZE)
    visited = {apply_moves(plan, [m], -BIT_STEP).bits_signature() for m in candidates}
    assert choose_moves(candidates, 1, plan, -BIT_STEP, visited) == []
