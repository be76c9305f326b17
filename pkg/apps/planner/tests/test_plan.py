import json

import pytest

from apps.core.exceptions import ClusteringError, ConfigError
from apps.network.builders import build_mlp
from apps.planner.plan import BitPlan, LayerBits, assign_bitwidths, load_plan_file, save_plan
from apps.quantization.clustering import adaptive_kmeans

# Weight standard deviations of an eight-layer conv/fc network, conv layers first
CONV_FC_SIGMAS = [0.115672, 0.046543, 0.034646, 0.027320, 0.026128, 0.009245, 0.011537, 0.018524]


@pytest.fixture
def calibrated():
    return BitPlan((
        LayerBits('fc1', bits_w=4, bits_a=8, weight_scales=(0.1, 0.2), act_lo=-1.0, act_hi=2.0),
        LayerBits('fc2', bits_w=2, bits_a=6, weight_scales=(0.3,), act_lo=0.0, act_hi=4.0),
    ))


def test_dict_round_trip(calibrated):
    document = calibrated.to_dict(target={'metric': 'size'}, status='TargetMet')
    assert BitPlan.from_dict(json.loads(json.dumps(document))) == calibrated
    assert document['layers'][1]['zero_point'] == 0
    assert document['layers'][1]['act_scale'] == pytest.approx(4.0 / 63)


def test_saved_plan_keeps_target_and_status(calibrated, tmp_path):
    path = tmp_path / 'plan.json'
    save_plan(calibrated, path, target={'metric': 'bops'}, status='Reverted')
    plan, raw = load_plan_file(path)
    assert plan == calibrated
    assert (raw['status'], raw['target']) == ('Reverted', {'metric': 'bops'})


def test_changing_weight_bits_drops_frozen_steps(calibrated):
    changed = calibrated.with_bits(weight_bits={'fc1': 6}, act_bits={'fc2': 8})
    assert changed.layer('fc1').weight_scales is None
    assert changed.layer('fc1').act_lo == -1.0
    assert changed.layer('fc2').weight_scales == (0.3,)
    assert not changed.calibrated
    assert calibrated.calibrated
    with pytest.raises(KeyError):
        calibrated.with_bits(weight_bits={'fc9': 4})


def test_invalid_bits_name_the_field():
    with pytest.raises(ConfigError) as info:
        LayerBits('fc1', bits_w=3)
    assert info.value.field == 'plan.fc1.bits_w'


def test_duplicate_layers_are_rejected():
    with pytest.raises(ConfigError):
        BitPlan.from_weight_bits(['fc1', 'fc1'], [8, 8])


def test_plan_must_cover_the_model():
    model = build_mlp(4, (4,), 2, seed=0)
    BitPlan.uniform(model).check_covers(model)
    with pytest.raises(ConfigError, match='plan covers'):
        BitPlan.from_weight_bits(['fc1'], [8]).check_covers(model)


def test_bad_plan_files(tmp_path):
    with pytest.raises(ConfigError):
        load_plan_file(tmp_path / 'absent.json')
    broken = tmp_path / 'broken.json'
    broken.write_text('{')
    with pytest.raises(ConfigError):
        load_plan_file(broken)
    old = tmp_path / 'old.json'
    old.write_text(json.dumps({'schema_version': 99, 'layers': []}))
    with pytest.raises(ConfigError, match='schema'):
        load_plan_file(old)


def test_clusters_map_to_layer_bits():
    plan = assign_bitwidths(adaptive_kmeans([0.07, 0.01, 0.12, 0.03], 4, 0.0), ['a', 'b', 'c', 'd'])
    assert plan.weight_bits() == {'a': 6, 'b': 2, 'c': 8, 'd': 4}
    assert set(plan.act_bits().values()) == {8}


def test_conv_fc_sigmas():
    names = ['conv1', 'conv2', 'conv3', 'conv4', 'conv5', 'fc1', 'fc2', 'fc3']
    bits = assign_bitwidths(adaptive_kmeans(CONV_FC_SIGMAS, 4, 0.0), names).weight_bits()
    assert bits['fc1'] == bits['fc2'] == 2
    assert bits['conv1'] == 8


def test_layer_names_must_match_clusters():
    with pytest.raises(ClusteringError):
        assign_bitwidths(adaptive_kmeans([1.0, 2.0], 2, 0.0), ['only'])
