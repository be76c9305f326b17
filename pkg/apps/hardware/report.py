"""
Plan-level hardware report normalized against an INT8 MAC baseline.

Shift-add energy  = Σ cycles * E_cycle(shift_add) + MACs * E_acc(shift_add)
INT8 energy       = MACs * (E_mul(int8) + E_acc(int8)), one cycle per MAC
"""
import csv
import io
import json
from dataclasses import asdict, dataclass, field

from apps.hardware.accounting import (
    int8_bops,
    int8_size_bytes,
    layer_add_events,
    layer_cycles,
    layer_size_bytes,
    macs_per_layer,
)
from apps.hardware.costs import HwCostTable
from apps.network.graph import ModelGraph
from apps.planner.plan import BitPlan
from apps.quantization.quantizer import VALID_BITS

REPORT_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class LayerHwRow:
    layer: str
    bits_w: int
    bits_a: int
    macs: int
    cycles: int
    add_events: int
    size_bytes: int
    bops: int
    shift_add_energy_pj: float
    int8_energy_pj: float


@dataclass(frozen=True)
class HwReport:
    label: str
    layers: tuple[LayerHwRow, ...]
    macs: int
    cycles: int
    add_events: int
    size_bytes: int
    bops: int
    energy_pj: float
    int8_energy_pj: float
    int8_cycles: int
    int8_size_bytes: int
    int8_bops: int
    areas_um2: dict = field(default_factory=dict)

    @property
    def energy_ratio(self) -> float:
        return self.energy_pj / self.int8_energy_pj

    @property
    def cycle_ratio(self) -> float:
        return self.cycles / self.int8_cycles

    @property
    def size_ratio(self) -> float:
        return self.size_bytes / self.int8_size_bytes

    @property
    def bops_ratio(self) -> float:
        return self.bops / self.int8_bops

    @property
    def area_ratio(self) -> float:
        return self.areas_um2['shift_add'] / self.areas_um2['int8']

    def summary_row(self) -> dict:
        return {
            'label': self.label,
            'macs': self.macs,
            'cycles': self.cycles,
            'size_bytes': self.size_bytes,
            'bops': self.bops,
            'energy_pj': self.energy_pj,
            'energy_ratio': self.energy_ratio,
            'cycle_ratio': self.cycle_ratio,
            'size_ratio': self.size_ratio,
            'bops_ratio': self.bops_ratio,
            'area_ratio': self.area_ratio,
        }


def energy_report(model: ModelGraph, plan, table: HwCostTable, label: str = 'plan') -> HwReport:
    """Per-layer and total cycles, energy, size and BOPs of `plan`, with INT8 ratios."""
    table.check_complete()
    plan.check_covers(model)
    shift_add = table.unit('shift_add')
    int8 = table.unit('int8')
    shapes = model.input_shapes()

    rows = []
    for layer in model.quantizable_layers():
        entry = plan.layer(layer.name)
        macs = macs_per_layer(layer, shapes[layer.name])
        qparams = entry.weight_qparams()
        cycles = layer_cycles(layer, entry.bits_w, qparams, shapes[layer.name])
        rows.append(LayerHwRow(
            layer=layer.name,
            bits_w=entry.bits_w,
            bits_a=entry.bits_a,
            macs=macs,
            cycles=cycles,
            add_events=layer_add_events(layer, entry.bits_w, qparams, shapes[layer.name]),
            size_bytes=layer_size_bytes(layer.param_count, entry.bits_w),
            bops=entry.bits_w * entry.bits_a * macs,
            shift_add_energy_pj=cycles * shift_add.energy_cycle_pj + macs * shift_add.energy_accumulate_pj,
            int8_energy_pj=macs * (int8.energy_multiply_pj + int8.energy_accumulate_pj),
        ))

    total_macs = sum(row.macs for row in rows)
    return HwReport(
        label=label,
        layers=tuple(rows),
        macs=total_macs,
        cycles=sum(row.cycles for row in rows),
        add_events=sum(row.add_events for row in rows),
        size_bytes=sum(row.size_bytes for row in rows),
        bops=sum(row.bops for row in rows),
        energy_pj=sum(row.shift_add_energy_pj for row in rows),
        int8_energy_pj=sum(row.int8_energy_pj for row in rows),
        int8_cycles=total_macs,
        int8_size_bytes=int8_size_bytes(model),
        int8_bops=int8_bops(model),
        areas_um2={kind: unit.area_um2 for kind, unit in sorted(table.units.items())},
    )


def int8_baseline_row(report: HwReport) -> dict:
    """The INT8 MAC reference: one cycle per MAC, 8-bit weights and activations."""
    return {
        'label': 'INT8',
        'macs': report.macs,
        'cycles': report.int8_cycles,
        'size_bytes': report.int8_size_bytes,
        'bops': report.int8_bops,
        'energy_pj': report.int8_energy_pj,
        'energy_ratio': 1.0,
        'cycle_ratio': 1.0,
        'size_ratio': 1.0,
        'bops_ratio': 1.0,
        'area_ratio': 1.0,
    }


def comparison_reports(model: ModelGraph, table: HwCostTable) -> list[HwReport]:
    """Uniform A8W{2,4,6,8} shift-add reports for the same model."""
    return [
        energy_report(model, BitPlan.uniform(model, bits_w=bits, bits_a=8), table, label=f"A8W{bits}")
        for bits in VALID_BITS
    ]


def report_document(plan_report: HwReport, comparisons: list[HwReport], table: HwCostTable) -> dict:
    return {
        'schema_version': REPORT_SCHEMA_VERSION,
        'cost_table': {'source': table.source, 'non_physical': table.non_physical},
        'areas_um2': plan_report.areas_um2,
        'area_ratio_shift_add_vs_int8': plan_report.area_ratio,
        'summary': [
            plan_report.summary_row(),
            int8_baseline_row(plan_report),
            *(report.summary_row() for report in comparisons),
        ],
        'layers': [asdict(row) for row in plan_report.layers],
    }


def report_csv(document: dict) -> str:
    """One row per layer of the plan followed by the summary rows."""
    buffer = io.StringIO()
    layer_fields = list(LayerHwRow.__dataclass_fields__)
    writer = csv.writer(buffer, lineterminator='\n')
    writer.writerow(['schema_version', REPORT_SCHEMA_VERSION])
    writer.writerow(layer_fields)
    for row in document['layers']:
        writer.writerow([row[name] for name in layer_fields])
    summary_fields = list(document['summary'][0])
    writer.writerow(summary_fields)
    for row in document['summary']:
        writer.writerow([row[name] for name in summary_fields])
    return buffer.getvalue()


def report_json(document: dict) -> str:
    return json.dumps(document, indent=2, sort_keys=True) + '\n'
