import json

import numpy as np
import pytest

from apps.core.exceptions import CostTableError
from apps.hardware.costs import builtin_cost_table, load_cost_table, parse_cost_table
from apps.hardware.report import comparison_reports, energy_report, report_csv, report_document, report_json
from apps.network.builders import build_lenet
from apps.planner.plan import BitPlan, LayerBits
from conftest import dense_model

UNITS = ('fp32', 'fp16', 'bf16', 'int8', 'shift_add')


def flat_table(value=1.0):
    unit = {
        'area_um2': value,
        'energy_multiply_pj': value,
        'energy_accumulate_pj': value,
        'energy_cycle_pj': value,
    }
    return parse_cost_table({'units': {kind: dict(unit) for kind in UNITS}}, source='flat')


def test_default_table_area_ratio():
    table = load_cost_table()
    assert table.area_ratio('shift_add') == pytest.approx(1635.4 / 2103.4)
    assert table.non_physical
    assert builtin_cost_table().area_ratio('shift_add') == table.area_ratio('shift_add')


def test_incomplete_table_is_rejected():
    units = flat_table().model_dump()['units']
    del units['bf16']
    with pytest.raises(CostTableError, match='bf16'):
        parse_cost_table({'units': units})


def test_negative_energy_is_rejected():
    units = flat_table().model_dump()['units']
    units['int8']['energy_cycle_pj'] = -1.0
    with pytest.raises(CostTableError, match='units.int8.energy_cycle_pj'):
        parse_cost_table({'units': units})


def test_missing_or_broken_table_file(tmp_path):
    with pytest.raises(CostTableError):
        load_cost_table(tmp_path / 'absent.toml')
    broken = tmp_path / 'broken.toml'
    broken.write_text('units = [')
    with pytest.raises(CostTableError):
        load_cost_table(broken)


def test_json_table_file(tmp_path):
    path = tmp_path / 'table.json'
    path.write_text(json.dumps(flat_table().model_dump(exclude={'source'})))
    assert load_cost_table(path).source == str(path)


def test_degenerate_table_energy_ratio():
    # Every code is 15 = 0b00001111: four cycles per MAC
    model = dense_model(np.full((4, 5), 0.15))
    plan = BitPlan((LayerBits('fc1', bits_w=8, weight_scales=(0.01,) * 4),))
    report = energy_report(model, plan, flat_table())
    assert report.cycles == 4 * report.macs
    assert report.energy_ratio == pytest.approx((4 + 1) / 2)
    assert report.cycle_ratio == 4.0


def test_lower_bits_never_cost_more_cycles():
    model = build_lenet((1, 12, 12), 3, seed=0)
    table = builtin_cost_table()
    eight = energy_report(model, BitPlan.uniform(model, 8), table)
    two = energy_report(model, BitPlan.uniform(model, 2), table)
    for row in two.layers:
        assert row.cycles <= 2 * row.macs
    assert two.cycles <= eight.cycles
    assert two.energy_pj <= eight.energy_pj


def test_report_document_carries_baselines():
    model = build_lenet((1, 12, 12), 3, seed=0)
    table = load_cost_table()
    names = [layer.name for layer in model.quantizable_layers()]
    plan = BitPlan.from_weight_bits(names, [8, 4, 4, 2])
    document = report_document(energy_report(model, plan, table), comparison_reports(model, table), table)

    labels = [row['label'] for row in document['summary']]
    assert labels == ['plan', 'INT8', 'A8W2', 'A8W4', 'A8W6', 'A8W8']
    rows = {row['label']: row for row in document['summary']}
    assert rows['plan']['size_bytes'] <= rows['A8W8']['size_bytes'] == rows['INT8']['size_bytes']
    assert rows['A8W8']['bops'] == rows['INT8']['bops']
    assert document['area_ratio_shift_add_vs_int8'] == pytest.approx(1635.4 / 2103.4)
    assert [row['layer'] for row in document['layers']] == names

    assert json.loads(report_json(document)) == json.loads(json.dumps(document))
    lines = report_csv(document).splitlines()
    assert lines[0] == 'schema_version,1'
    assert len(lines) == 1 + 1 + len(names) + 1 + len(labels)
