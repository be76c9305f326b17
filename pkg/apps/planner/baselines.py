"""
Uniform-precision baselines: W{b}A8 for every bitwidth, each with the same calibration,
QAT and evaluation a planner round gets.
"""
import csv
import io
import logging
from dataclasses import dataclass
from typing import Sequence

from apps.engine.evaluation import evaluate_accuracy
from apps.engine.trainer import TrainConfig, calibrate, qat_epochs
from apps.hardware.accounting import bops, model_size_bytes
from apps.network.graph import ModelGraph
from apps.network.manifest import write_text_atomic
from apps.planner.orchestrator import PlanningData
from apps.planner.plan import BitPlan
from apps.quantization.quantizer import VALID_BITS

logger = logging.getLogger(__name__)

BASELINE_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class BaselineRow:
    bits: int
    accuracy: float
    size_bytes: int
    bops: int


def uniform_baseline(
    model: ModelGraph,
    data: PlanningData,
    train_config: TrainConfig,
    epochs: int,
    seed: int,
    bitset: Sequence[int] = VALID_BITS,
    correlation_id: str = '',
) -> list[BaselineRow]:
    """One row per bitwidth, each trained from the same float model."""
    rows = []
    for bits in bitset:
        plan = calibrate(model, data.calibration, BitPlan.uniform(model, bits_w=bits), seed=seed)
        cfg = train_config.model_copy(update={'epochs': epochs, 'seed': seed})
        trained = qat_epochs(model, plan, data.train, cfg, correlation_id)
        report = evaluate_accuracy(trained, data.evaluation, plan)
        row = BaselineRow(bits, report.top1_accuracy, model_size_bytes(trained, plan), bops(trained, plan))
        logger.info(
            f"Uniform W{bits}A8 baseline: {row.accuracy:.2f}%",
            extra={'correlation_id': correlation_id, 'extra_data': {'bits': bits, 'size_bytes': row.size_bytes}},
        )
        rows.append(row)
    return rows


def baseline_csv(rows: list[BaselineRow]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator='\n')
    writer.writerow(['schema_version', 'bits', 'accuracy', 'size_bytes', 'bops'])
    for row in rows:
        writer.writerow([BASELINE_SCHEMA_VERSION, row.bits, f"{row.accuracy:.6f}", row.size_bytes, row.bops])
    return buffer.getvalue()


def save_baseline(rows: list[BaselineRow], path):
    write_text_atomic(path, baseline_csv(rows))


def load_baseline(path) -> list[BaselineRow]:
    with open(path, newline='') as handle:
        return [
            BaselineRow(int(r['bits']), float(r['accuracy']), int(r['size_bytes']), int(r['bops']))
            for r in csv.DictReader(handle)
        ]
