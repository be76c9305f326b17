import json

import numpy as np
import pytest

from apps.core.exceptions import DimensionMismatchError, ManifestError, UnknownLayerKindError
from apps.network.builders import build_lenet, build_mlp
from apps.network.graph import LayerKind, LayerRecord, ModelGraph
from apps.network.manifest import load_model, save_model


def write_manifest(tmp_path, layers, blobs, input_shape=(4,)):
    blob_dir = tmp_path / 'model.blobs'
    blob_dir.mkdir()
    for name, values in blobs.items():
        (blob_dir / name).write_bytes(np.asarray(values, dtype='<f4').tobytes())
    path = tmp_path / 'model.json'
    path.write_text(json.dumps({'schema_version': 1, 'name': 'm', 'input_shape': list(input_shape), 'layers': layers}))
    return path


def test_load_single_dense_layer(tmp_path):
    path = write_manifest(
        tmp_path,
        [{'name': 'fc1', 'kind': 'dense', 'hyper': {'in_features': 4, 'out_features': 2},
          'weight_blob': 'model.blobs/fc1.weight.f32', 'weight_dims': [2, 4]}],
        {'fc1.weight.f32': np.arange(8)},
    )
    model = load_model(path)
    assert len(model.quantizable_layers()) == 1
    np.testing.assert_array_equal(model.layer('fc1').weights, np.arange(8, dtype=np.float32).reshape(2, 4))


def test_short_blob_names_the_layer(tmp_path):
    path = write_manifest(
        tmp_path,
        [{'name': 'fc1', 'kind': 'dense', 'hyper': {'in_features': 4, 'out_features': 2},
          'weight_blob': 'model.blobs/fc1.weight.f32', 'weight_dims': [2, 4]}],
        {'fc1.weight.f32': np.arange(7)},
    )
    with pytest.raises(DimensionMismatchError) as excinfo:
        load_model(path)
    assert excinfo.value.layer == 'fc1'


def test_unknown_kind_is_rejected(tmp_path):
    path = write_manifest(tmp_path, [{'name': 'x', 'kind': 'lstm'}], {})
    with pytest.raises(UnknownLayerKindError):
        load_model(path)


def test_missing_manifest(tmp_path):
    with pytest.raises(ManifestError):
        load_model(tmp_path / 'absent.json')


@pytest.mark.parametrize('layer, field', [
    ({'kind': 'relu'}, 'name'),
    ({'name': 'act'}, 'kind'),
])
def test_missing_layer_field_is_named(tmp_path, layer, field):
    path = write_manifest(tmp_path, [layer], {})
    with pytest.raises(ManifestError, match=f"missing field '{field}'"):
        load_model(path)


def test_missing_input_shape_is_named(tmp_path):
    path = tmp_path / 'model.json'
    path.write_text(json.dumps({'schema_version': 1, 'name': 'm', 'layers': [{'name': 'act', 'kind': 'relu'}]}))
    with pytest.raises(ManifestError, match="missing field 'input_shape'"):
        load_model(path)


@pytest.mark.parametrize('builder', [
    lambda: build_mlp(12, (7, 5), 3, seed=4),
    lambda: build_lenet((1, 12, 12), 3, seed=4),
])
def test_round_trip_is_bit_identical(tmp_path, builder):
    model = builder()
    save_model(model, tmp_path / 'model.json')
    loaded = load_model(tmp_path / 'model.json')
    assert [layer.name for layer in loaded] == [layer.name for layer in model]
    for original, restored in zip(model, loaded):
        assert original.kind == restored.kind
        assert original.hyper == restored.hyper
        if original.weights is not None:
            assert original.weights.tobytes() == restored.weights.tobytes()
            assert original.bias.tobytes() == restored.bias.tobytes()


def test_tensorless_graph_writes_no_blobs(tmp_path):
    graph = ModelGraph('act', (4,), [LayerRecord('relu', LayerKind.RELU), LayerRecord('flat', LayerKind.FLATTEN)])
    save_model(graph, tmp_path / 'act.json')
    manifest = json.loads((tmp_path / 'act.json').read_text())
    assert all('weight_blob' not in entry for entry in manifest['layers'])
    assert list((tmp_path / 'act.blobs').iterdir()) == []


def test_overwrite_replaces_previous_model(tmp_path):
    path = tmp_path / 'model.json'
    save_model(build_mlp(6, (4,), 2, seed=1), path)
    replacement = build_mlp(6, (4,), 2, seed=2)
    save_model(replacement, path)
    loaded = load_model(path)
    assert loaded.layer('fc1').weights.tobytes() == replacement.layer('fc1').weights.tobytes()
    assert sorted(p.name for p in tmp_path.iterdir()) == ['model.blobs', 'model.json']
