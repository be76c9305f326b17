import json
from io import StringIO

import pytest
from django.core.management import call_command
from django.core.management.base import CommandError

from apps.core.exceptions import EXIT_INFEASIBLE
from apps.planner.plan import load_plan_file
from apps.planner.trace import PlanTrace

RUN_TOML = """
seed = 0
output_dir = "{out}"

[model]
builder = "mlp"
hidden = [16]

[dataset]
eval_fraction = 0.2
calibration_size = 128

[dataset.synthetic]
n = 400
d = 8
classes = 4
separation = {separation}

[budget]
phase1_rounds = 2
phase1_epochs = 2
phase2_rounds = 6
phase2_epochs = 2
restarts = 2

[training]
epochs = 5
"""


def write_config(directory, separation=10.0):
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / 'run.toml'
    path.write_text(RUN_TOML.format(out=directory / 'out', separation=separation))
    return path


def run(name, **options):
    out = StringIO()
    call_command(name, stdout=out, **options)
    return out.getvalue()


@pytest.fixture(scope='module')
def planned(tmp_path_factory):
    """A config whose output directory holds a finished planner run."""
    config = write_config(tmp_path_factory.mktemp('planned'))
    run('train', config=str(config))
    output = run('plan', config=str(config))
    return config, config.parent / 'out', output


def test_train_writes_the_float_model(tmp_path):
    config = write_config(tmp_path)
    output = run('train', config=str(config), epochs=2)
    assert (tmp_path / 'out' / 'model.json').is_file()
    assert 'float accuracy' in output


def test_stats_are_reproducible(tmp_path):
    config = write_config(tmp_path)
    first = run('stats', config=str(config))
    text = (tmp_path / 'out' / 'stats.csv').read_text()
    second = run('stats', config=str(config))
    assert first == second
    assert (tmp_path / 'out' / 'stats.csv').read_text() == text
    header, *rows = text.splitlines()
    assert header.split(',')[:5] == ['schema_version', 'layer', 'index', 'bits', 'sigma']
    assert [row.split(',')[1] for row in rows] == ['fc1', 'fc2']


def test_cluster_writes_assignment(tmp_path):
    config = write_config(tmp_path)
    run('cluster', config=str(config), lam=0.5, clusters=2)
    plan, raw = load_plan_file(tmp_path / 'out' / 'cluster_plan.json')
    assert raw['target'] == {'lambda': 0.5, 'clusters': 2}
    assert set(plan.weight_bits().values()) <= {2, 4, 6, 8}
    assert len((tmp_path / 'out' / 'clusters.csv').read_text().splitlines()) == 3


def test_plan_meets_targets(planned):
    _, out, output = planned
    plan, raw = load_plan_file(out / 'plan.json')
    assert raw['status'] == 'TargetMet'
    assert raw['target']['metric'] == 'size'
    assert (out / 'planned_model.json').is_file()
    assert PlanTrace.load(out / 'trace.csv').final.status == 'TargetMet'
    assert 'search cost' in output


def test_plan_reruns_are_byte_identical(planned, tmp_path):
    config, out, _ = planned
    rerun = tmp_path / 'rerun'
    run('plan', config=str(config), out=str(rerun))
    for name in ('plan.json', 'trace.csv', 'planned_model.json'):
        assert (rerun / name).read_bytes() == (out / name).read_bytes()


def test_verify_trace(planned, tmp_path):
    _, out, _ = planned
    output = run('verify_trace', trace=str(out / 'trace.csv'), plan=str(out / 'plan.json'))
    assert 'replayed' in output

    document = json.loads((out / 'plan.json').read_text())
    document['layers'][0]['bits_w'] = 2 if document['layers'][0]['bits_w'] != 2 else 4
    tampered = tmp_path / 'plan.json'
    tampered.write_text(json.dumps(document))
    with pytest.raises(CommandError, match='differ'):
        run('verify_trace', trace=str(out / 'trace.csv'), plan=str(tampered))


def test_quantized_model_evaluates_like_the_plan(planned):
    config, out, _ = planned
    run('evaluate', config=str(config), plan=str(out / 'plan.json'))
    planned_eval = json.loads((out / 'eval.json').read_text())

    run('quantize', config=str(config))
    run('evaluate', config=str(config), plan=str(out / 'plan.json'), model=str(out / 'quantized_model.json'))
    quantized_eval = json.loads((out / 'eval.json').read_text())

    for key in ('accuracy', 'correct', 'size_bytes', 'bops'):
        assert quantized_eval[key] == planned_eval[key]


def test_float_evaluation(planned):
    config, out, _ = planned
    run('evaluate', config=str(config))
    document = json.loads((out / 'eval.json').read_text())
    assert document['plan'] is None
    assert 'size_bytes' not in document


def test_hw_report(planned):
    config, out, _ = planned
    output = run('hw_report', config=str(config))
    document = json.loads((out / 'report.json').read_text())
    rows = {row['label']: row for row in document['summary']}
    assert rows['plan']['size_bytes'] <= rows['INT8']['size_bytes']
    assert rows['plan']['cycles'] <= rows['A8W8']['cycles']
    assert rows['plan']['energy_pj'] <= rows['A8W8']['energy_pj']
    int8 = rows['INT8']
    assert int8['energy_ratio'] == int8['cycle_ratio'] == 1.0
    for label in ('plan', 'A8W8'):
        assert rows[label]['energy_ratio'] == pytest.approx(rows[label]['energy_pj'] / int8['energy_pj'])
        assert rows[label]['cycle_ratio'] == pytest.approx(rows[label]['cycles'] / int8['cycles'])
    assert rows['plan']['energy_ratio'] <= rows['A8W8']['energy_ratio']
    assert document['area_ratio_shift_add_vs_int8'] == pytest.approx(1635.4 / 2103.4)
    assert 'placeholders' in output
    assert (out / 'report.csv').read_text().startswith('schema_version,1')


def test_baseline_and_plot(planned):
    config, out, _ = planned
    run('baseline', config=str(config), epochs=1)
    assert len((out / 'baseline.csv').read_text().splitlines()) == 5
    png = out / 'trace.png'
    run('plot_trace', trace=str(out / 'trace.csv'), plan=str(out / 'plan.json'),
        baseline=str(out / 'baseline.csv'), png=str(png))
    assert png.read_bytes()[:8] == b'\x89PNG\r\n\x1a\n'


def test_infeasible_targets_exit_with_code_two(tmp_path):
    config = write_config(tmp_path, separation=0.0)
    with pytest.raises(CommandError) as info:
        run('plan', config=str(config), target_acc=99.0, target_size=1.0, imax=1)
    assert info.value.returncode == EXIT_INFEASIBLE
    _, raw = load_plan_file(tmp_path / 'out' / 'plan.json')
    assert raw['status'] == 'Infeasible'


def test_bad_config_is_reported(tmp_path):
    path = tmp_path / 'run.toml'
    path.write_text('seed = 1\n[dataset]\nimages = "x.idx"\nlabels = "y.idx"\n')
    with pytest.raises(CommandError, match='dataset.images') as info:
        run('train', config=str(path))
    assert info.value.returncode == 1


def test_missing_plan_is_reported(tmp_path):
    config = write_config(tmp_path)
    with pytest.raises(CommandError, match='plan file not found'):
        run('quantize', config=str(config), plan=str(tmp_path / 'none.json'))
