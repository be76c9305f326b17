"""
Reference model builders with seeded He initialisation.
"""
from typing import Sequence

import numpy as np

from apps.network.datasets import rng_for
from apps.network.graph import LayerKind, LayerRecord, ModelGraph
from apps.network.tensors import TENSOR_DTYPE


def _he_normal(rng: np.random.Generator, dims: tuple, fan_in: int) -> np.ndarray:
    return (rng.standard_normal(dims) * np.sqrt(2.0 / fan_in)).astype(TENSOR_DTYPE)


def dense_layer(name: str, in_features: int, out_features: int, rng: np.random.Generator) -> LayerRecord:
    return LayerRecord(
        name=name,
        kind=LayerKind.DENSE,
        hyper={'in_features': in_features, 'out_features': out_features},
        weights=_he_normal(rng, (out_features, in_features), in_features),
        bias=np.zeros(out_features, dtype=TENSOR_DTYPE),
    )


def conv_layer(
    name: str,
    in_channels: int,
    out_channels: int,
    kernel: int,
    rng: np.random.Generator,
    stride: int = 1,
    padding: int = 0,
) -> LayerRecord:
    return LayerRecord(
        name=name,
        kind=LayerKind.CONV2D,
        hyper={
            'in_channels': in_channels,
            'out_channels': out_channels,
            'kernel': kernel,
            'stride': stride,
            'padding': padding,
        },
        weights=_he_normal(rng, (out_channels, in_channels, kernel, kernel), in_channels * kernel * kernel),
        bias=np.zeros(out_channels, dtype=TENSOR_DTYPE),
    )


def build_mlp(
    input_dim: int,
    hidden: Sequence[int],
    classes: int,
    seed: int,
    name: str = 'mlp',
) -> ModelGraph:
    """
    Dense/relu chain: input_dim -> hidden[0] -> ... -> classes.

    Layers are named fc1, fc2, ...; the logits layer has no trailing activation.
    """
    rng = rng_for(seed)
    widths = [input_dim, *hidden, classes]
    layers = []
    for index in range(len(widths) - 1):
        layers.append(dense_layer(f"fc{index + 1}", widths[index], widths[index + 1], rng))
        if index < len(widths) - 2:
            layers.append(LayerRecord(name=f"relu{index + 1}", kind=LayerKind.RELU))
    return ModelGraph(name=name, input_shape=(input_dim,), layers=layers).validate()


def build_lenet(
    input_shape: Sequence[int] = (1, 28, 28),
    classes: int = 10,
    seed: int = 0,
    name: str = 'lenet',
) -> ModelGraph:
    """Small conv net: conv(8) -> pool -> conv(16) -> pool -> fc(64) -> fc(classes)."""
    rng = rng_for(seed)
    channels = int(input_shape[0])
    layers = [
        conv_layer('conv1', channels, 8, 3, rng),
        LayerRecord(name='relu1', kind=LayerKind.RELU),
        LayerRecord(name='pool1', kind=LayerKind.MAXPOOL2D, hyper={'kernel': 2, 'stride': 2}),
        conv_layer('conv2', 8, 16, 3, rng),
        LayerRecord(name='relu2', kind=LayerKind.RELU),
        LayerRecord(name='pool2', kind=LayerKind.MAXPOOL2D, hyper={'kernel': 2, 'stride': 2}),
        LayerRecord(name='flatten', kind=LayerKind.FLATTEN),
    ]
    # Flattened width depends on the input resolution
    partial = ModelGraph(name=name, input_shape=tuple(input_shape), layers=layers)
    flat = partial.output_shape[0]
    layers += [
        dense_layer('fc1', flat, 64, rng),
        LayerRecord(name='relu3', kind=LayerKind.RELU),
        dense_layer('fc2', 64, classes, rng),
    ]
    return ModelGraph(name=name, input_shape=tuple(input_shape), layers=layers).validate()
