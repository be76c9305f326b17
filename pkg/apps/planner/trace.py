"""
Planning trace: one record per planning step, written as CSV.

Actions are `start`, `cluster`, `increase(<moves>)`, `decrease(<moves>)`, `revert(<round>)`
and `stop`. A move is `<layer>:w` or `<layer>:a`, moves are separated by `;`. The
per-layer bit snapshot is `<layer>=<bits_w>/<bits_a>` joined by `;`.
"""
import csv
import io
import logging
import re
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Iterator, Optional

from apps.core.exceptions import TraceReplayError
from apps.network.manifest import write_text_atomic
from apps.planner.budget import SearchBudget
from apps.planner.plan import BitPlan

logger = logging.getLogger(__name__)

TRACE_SCHEMA_VERSION = 1

ACTION_PATTERN = re.compile(r'^(?P<verb>start|cluster|increase|decrease|revert|stop)(\((?P<args>[^)]*)\))?$')


@dataclass(frozen=True)
class TraceRecord:
    round: int
    phase: str
    lam: Optional[float]
    accuracy: float
    size_bytes: int
    bops: int
    zone: str
    action: str
    status: str
    bits: str


def bits_snapshot(plan: BitPlan) -> str:
    return ';'.join(f"{entry.name}={entry.bits_w}/{entry.bits_a}" for entry in plan)


def parse_snapshot(snapshot: str) -> dict[str, tuple[int, int]]:
    bits = {}
    for item in filter(None, snapshot.split(';')):
        name, value = item.split('=')
        bits_w, bits_a = value.split('/')
        bits[name] = (int(bits_w), int(bits_a))
    return bits


def move_action(verb: str, moves: list[tuple[str, str]]) -> str:
    return f"{verb}({';'.join(f'{name}:{kind}' for name, kind in moves)})"


class PlanTrace:
    def __init__(self, records: Optional[list[TraceRecord]] = None):
        self.records: list[TraceRecord] = []
        for record in records or []:
            self.append(record)

    def __iter__(self) -> Iterator[TraceRecord]:
        return iter(self.records)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def next_round(self) -> int:
        return self.records[-1].round + 1 if self.records else 0

    @property
    def final(self) -> Optional[TraceRecord]:
        return self.records[-1] if self.records else None

    def append(self, record: TraceRecord):
        if self.records and record.round <= self.records[-1].round:
            raise ValueError(f"trace rounds must increase: {record.round} after {self.records[-1].round}")
        self.records.append(record)

    def record(
        self,
        phase: str,
        plan: BitPlan,
        accuracy: float,
        size_bytes: int,
        bops: int,
        zone: str,
        action: str,
        lam: Optional[float] = None,
        status: str = '',
    ) -> TraceRecord:
        entry = TraceRecord(
            round=self.next_round,
            phase=phase,
            lam=lam,
            accuracy=round(float(accuracy), 6),
            size_bytes=int(size_bytes),
            bops=int(bops),
            zone=zone,
            action=action,
            status=status,
            bits=bits_snapshot(plan),
        )
        self.append(entry)
        return entry

    def by_round(self, round_index: int) -> TraceRecord:
        for record in self.records:
            if record.round == round_index:
                return record
        raise KeyError(round_index)

    def to_csv(self) -> str:
        buffer = io.StringIO()
        names = [f.name for f in fields(TraceRecord)]
        writer = csv.writer(buffer, lineterminator='\n')
        writer.writerow(['schema_version', *names])
        for record in self.records:
            row = [getattr(record, name) for name in names]
            row[names.index('lam')] = '' if record.lam is None else repr(record.lam)
            row[names.index('accuracy')] = f"{record.accuracy:.6f}"
            writer.writerow([TRACE_SCHEMA_VERSION, *row])
        return buffer.getvalue()

    def save(self, path):
        write_text_atomic(path, self.to_csv())

    @classmethod
    def from_csv(cls, text: str) -> 'PlanTrace':
        reader = csv.DictReader(io.StringIO(text))
        records = []
        for row in reader:
            if int(row['schema_version']) != TRACE_SCHEMA_VERSION:
                raise TraceReplayError(f"unsupported trace schema {row['schema_version']!r}")
            records.append(TraceRecord(
                round=int(row['round']),
                phase=row['phase'],
                lam=float(row['lam']) if row['lam'] else None,
                accuracy=float(row['accuracy']),
                size_bytes=int(row['size_bytes']),
                bops=int(row['bops']),
                zone=row['zone'],
                action=row['action'],
                status=row['status'],
                bits=row['bits'],
            ))
        return cls(records)

    @classmethod
    def load(cls, path) -> 'PlanTrace':
        path = Path(path)
        if not path.is_file():
            raise TraceReplayError(f"trace file not found: {path}")
        return cls.from_csv(path.read_text())


def observed_budget(trace: PlanTrace, budget: SearchBudget) -> SearchBudget:
    """`budget` with the round caps replaced by the rounds the trace actually ran."""
    p1 = sum(1 for r in trace if r.phase == 'P1' and r.action == 'cluster')
    p2 = sum(1 for r in trace if r.phase == 'P2' and r.action.startswith(('increase', 'decrease')))
    return budget.model_copy(update={'phase1_rounds': p1, 'phase2_rounds': p2})


def _apply_moves(bits: dict[str, tuple[int, int]], verb: str, args: str, round_index: int) -> dict:
    step = 2 if verb == 'increase' else -2
    updated = dict(bits)
    for move in filter(None, args.split(';')):
        name, kind = move.split(':')
        if name not in updated:
            raise TraceReplayError(f"round {round_index}: unknown layer '{name}'")
        bits_w, bits_a = updated[name]
        if kind == 'w':
            bits_w += step
        elif kind == 'a':
            bits_a += step
        else:
            raise TraceReplayError(f"round {round_index}: bad move '{move}'")
        if not (2 <= bits_w <= 8 and 2 <= bits_a <= 8):
            raise TraceReplayError(f"round {round_index}: move '{move}' leaves the bit set")
        updated[name] = (bits_w, bits_a)
    return updated


def replay(trace: PlanTrace) -> dict[str, tuple[int, int]]:
    """
    Re-derive the final bit assignment from the trace actions.

    Clustering steps take their recorded snapshot; moves and reverts are re-applied and
    must reproduce the snapshot recorded with them. Returns the final (bits_w, bits_a) per
    layer.
    """
    if not len(trace):
        raise TraceReplayError("trace is empty")
    current: Optional[dict] = None
    for record in trace:
        match = ACTION_PATTERN.match(record.action)
        if match is None:
            raise TraceReplayError(f"round {record.round}: unknown action '{record.action}'")
        verb, args = match.group('verb'), match.group('args') or ''
        recorded = parse_snapshot(record.bits)

        if verb in ('start', 'cluster'):
            expected = recorded
        elif current is None:
            raise TraceReplayError(f"round {record.round}: '{verb}' before a start record")
        elif verb in ('increase', 'decrease'):
            expected = _apply_moves(current, verb, args, record.round)
        elif verb == 'revert':
            expected = parse_snapshot(trace.by_round(int(args)).bits)
        else:
            expected = current

        if expected != recorded:
            raise TraceReplayError(
                f"round {record.round}: replayed bits {expected} differ from recorded {recorded}"
            )
        current = expected

    if trace.final.action != 'stop':
        raise TraceReplayError("trace does not end with a stop record")
    return current
