"""
Model manifest serialization.

A model is stored as a JSON manifest plus one raw little-endian float32 blob per tensor:

    model.json
    model.blobs/<layer>.weight.f32
    model.blobs/<layer>.bias.f32

Blob paths in the manifest are relative to the manifest's directory.
"""
import json
import logging
import os
import shutil
import tempfile
from pathlib import Path
from typing import Optional

import numpy as np

from apps.core.exceptions import DimensionMismatchError, ManifestError
from apps.network.graph import LayerKind, LayerRecord, ModelGraph
from apps.network.tensors import make_tensor

logger = logging.getLogger(__name__)

MANIFEST_SCHEMA_VERSION = 1
BLOB_DTYPE = np.dtype('<f4')


def _blob_dir(manifest_path: Path) -> Path:
    return manifest_path.with_name(manifest_path.stem + '.blobs')


def _required(entry: dict, key: str, where: str):
    if not isinstance(entry, dict) or key not in entry:
        raise ManifestError(f"{where}: missing field '{key}'")
    return entry[key]


def _read_blob(base: Path, relative: str, dims, layer_name: str) -> np.ndarray:
    blob_path = base / relative
    if not blob_path.is_file():
        raise ManifestError(f"layer '{layer_name}': blob not found: {blob_path}")
    raw = blob_path.read_bytes()
    if len(raw) % BLOB_DTYPE.itemsize:
        raise DimensionMismatchError(layer_name, f"blob {relative} is not a float32 stream")
    values = np.frombuffer(raw, dtype=BLOB_DTYPE)
    return make_tensor(values, dims, name=layer_name)


def load_model(manifest_path) -> ModelGraph:
    """
    Load a model manifest and all of its tensor blobs.

    Layer order is the manifest order. Raises ManifestError for missing files,
    DimensionMismatchError (naming the layer) when a blob does not match the declared
    dims, and UnknownLayerKindError for unsupported kinds.
    """
    manifest_path = Path(manifest_path)
    if not manifest_path.is_file():
        raise ManifestError(f"manifest not found: {manifest_path}")

    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as e:
        raise ManifestError(f"manifest {manifest_path} is not valid JSON: {e}") from e

    base = manifest_path.parent
    layers = []
    for index, entry in enumerate(manifest.get('layers', [])):
        name = _required(entry, 'name', f"layers[{index}]")
        kind = LayerKind.parse(_required(entry, 'kind', f"layer '{name}'"))
        layer = LayerRecord(
            name=name,
            kind=kind,
            hyper={key: int(value) for key, value in entry.get('hyper', {}).items()},
        )
        if entry.get('weight_blob'):
            dims = entry.get('weight_dims') or layer.weight_dims()
            layer.weights = _read_blob(base, entry['weight_blob'], dims, name)
        if entry.get('bias_blob'):
            dims = entry.get('bias_dims') or layer.bias_dims()
            layer.bias = _read_blob(base, entry['bias_blob'], dims, name)
        layers.append(layer)

    model = ModelGraph(
        name=manifest.get('name', manifest_path.stem),
        input_shape=tuple(_required(manifest, 'input_shape', str(manifest_path))),
        layers=layers,
    ).validate()

    logger.info(
        f"Loaded model {model.name} with {len(model.layers)} layers",
        extra={'extra_data': {'path': str(manifest_path), 'quantizable': len(model.quantizable_layers())}},
    )
    return model


def model_to_manifest(model: ModelGraph, blob_dir_name: str) -> dict:
    layers = []
    for layer in model.layers:
        entry = {'name': layer.name, 'kind': layer.kind.value, 'hyper': dict(layer.hyper)}
        if layer.weights is not None:
            entry['weight_blob'] = f"{blob_dir_name}/{layer.name}.weight.f32"
            entry['weight_dims'] = list(layer.weights.shape)
        if layer.bias is not None:
            entry['bias_blob'] = f"{blob_dir_name}/{layer.name}.bias.f32"
            entry['bias_dims'] = list(layer.bias.shape)
        layers.append(entry)
    return {
        'schema_version': MANIFEST_SCHEMA_VERSION,
        'name': model.name,
        'input_shape': list(model.input_shape),
        'layers': layers,
    }


def save_model(model: ModelGraph, path, extra: Optional[dict] = None):
    """
    Write `model` as manifest + blobs so that `load_model` inverts it bit-exactly.

    Blobs are written to a temporary directory that replaces the previous blob directory
    by rename; the manifest is replaced the same way.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    blob_dir = _blob_dir(path)

    staging = Path(tempfile.mkdtemp(prefix=blob_dir.name + '.', dir=path.parent))
    try:
        for layer in model.layers:
            if layer.weights is not None:
                (staging / f"{layer.name}.weight.f32").write_bytes(
                    np.ascontiguousarray(layer.weights, dtype=BLOB_DTYPE).tobytes()
                )
            if layer.bias is not None:
                (staging / f"{layer.name}.bias.f32").write_bytes(
                    np.ascontiguousarray(layer.bias, dtype=BLOB_DTYPE).tobytes()
                )

        manifest = model_to_manifest(model, blob_dir.name)
        if extra:
            manifest.update(extra)

        retired = None
        if blob_dir.exists():
            retired = blob_dir.with_name(staging.name + '.old')
            os.replace(blob_dir, retired)
        os.replace(staging, blob_dir)
        if retired is not None:
            shutil.rmtree(retired, ignore_errors=True)

        write_text_atomic(path, json.dumps(manifest, indent=2) + '\n')
    finally:
        if staging.exists():
            shutil.rmtree(staging, ignore_errors=True)

    logger.info(
        f"Saved model {model.name}",
        extra={'extra_data': {'path': str(path), 'layers': len(model.layers)}},
    )


def write_text_atomic(path, text: str):
    """Write `text` to `path` through a temporary file and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(prefix=path.name + '.', dir=path.parent)
    try:
        with os.fdopen(fd, 'w', newline='') as handle:
            handle.write(text)
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise
