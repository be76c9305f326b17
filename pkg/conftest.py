"""
Shared fixtures: small seeded models and datasets.
"""
import numpy as np
import pytest

from apps.network.builders import build_mlp
from apps.network.datasets import gen_synthetic
from apps.network.graph import LayerKind, LayerRecord, ModelGraph


@pytest.fixture
def rng():
    return np.random.Generator(np.random.PCG64(1234))


@pytest.fixture
def blobs():
    """Well separated 4-class blobs in 8 dimensions."""
    return gen_synthetic(seed=0, n=400, d=8, classes=4, separation=10.0)


@pytest.fixture
def tiny_mlp():
    return build_mlp(input_dim=8, hidden=(16,), classes=4, seed=0)


def dense_model(weights: np.ndarray, bias=None, name: str = 'single') -> ModelGraph:
    """One dense layer with the given (out, in) weights."""
    out_features, in_features = weights.shape
    layer = LayerRecord(
        name='fc1',
        kind=LayerKind.DENSE,
        hyper={'in_features': in_features, 'out_features': out_features},
        weights=np.asarray(weights, dtype=np.float32),
        bias=None if bias is None else np.asarray(bias, dtype=np.float32),
    )
    return ModelGraph(name=name, input_shape=(in_features,), layers=[layer]).validate()
