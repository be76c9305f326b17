"""
Refinement moves: ±2-bit changes of one layer's weight or activation bitwidth.
"""
from dataclasses import dataclass
from typing import Optional

from apps.planner.plan import BitPlan
from apps.planner.targets import TargetMetric

BIT_STEP = 2
MIN_BITS = 2
MAX_BITS = 8
SCORE_EPS = 1e-9


@dataclass(frozen=True)
class Move:
    layer: str
    index: int
    kind: str           # 'w' or 'a'
    score: float
    gain: float = 0.0   # BOPs removed per 2-bit decrease

    def as_pair(self) -> tuple[str, str]:
        return self.layer, self.kind


def increase_candidates(
    plan: BitPlan,
    weight_scores: dict[str, float],
    act_scores: Optional[dict[str, float]] = None,
) -> list[Move]:
    """Layers that can still widen, most sensitive first, ties by layer index."""
    moves = []
    for index, entry in enumerate(plan):
        if entry.bits_w < MAX_BITS:
            moves.append(Move(entry.name, index, 'w', weight_scores[entry.name]))
        if act_scores is not None and entry.bits_a < MAX_BITS:
            moves.append(Move(entry.name, index, 'a', act_scores[entry.name]))
    return sorted(moves, key=lambda m: (-m.score, m.index, m.kind != 'w'))


def decrease_candidates(
    plan: BitPlan,
    weight_scores: dict[str, float],
    macs: dict[str, int],
    target_metric: TargetMetric,
    act_scores: Optional[dict[str, float]] = None,
) -> list[Move]:
    """
    Layers that can still narrow.

    Under a size target only weights move, least sensitive first. Under a BOPs target
    activations are candidates too, ranked by BOPs removed per unit of sensitivity.
    """
    moves = []
    for index, entry in enumerate(plan):
        if entry.bits_w > MIN_BITS:
            gain = BIT_STEP * entry.bits_a * macs[entry.name]
            moves.append(Move(entry.name, index, 'w', weight_scores[entry.name], gain))
        if target_metric == TargetMetric.BOPS and act_scores is not None and entry.bits_a > MIN_BITS:
            gain = BIT_STEP * entry.bits_w * macs[entry.name]
            moves.append(Move(entry.name, index, 'a', act_scores[entry.name], gain))

    if target_metric == TargetMetric.BOPS:
        return sorted(moves, key=lambda m: (-m.gain / (m.score + SCORE_EPS), m.index, m.kind != 'w'))
    return sorted(moves, key=lambda m: (m.score, m.index))


def apply_moves(plan: BitPlan, moves: list[Move], step: int) -> BitPlan:
    weight_bits = {}
    act_bits = {}
    for move in moves:
        entry = plan.layer(move.layer)
        if move.kind == 'w':
            weight_bits[move.layer] = entry.bits_w + step
        else:
            act_bits[move.layer] = entry.bits_a + step
    return plan.with_bits(weight_bits=weight_bits, act_bits=act_bits)


def choose_moves(
    candidates: list[Move],
    count: int,
    plan: BitPlan,
    step: int,
    visited: set,
) -> list[Move]:
    """
    The `count` top-ranked moves, sliding down the ranking when that assignment was
    already visited. Empty when every window revisits a plan.
    """
    for offset in range(len(candidates)):
        chosen = candidates[offset:offset + count]
        if apply_moves(plan, chosen, step).bits_signature() not in visited:
            return chosen
    return []
