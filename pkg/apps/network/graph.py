"""
Layer records and the linear-chain model graph.
"""
import copy
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator, Optional

import numpy as np

from apps.core.exceptions import DimensionMismatchError, ShapeMismatchError, UnknownLayerKindError
from apps.network.tensors import Tensor

Shape = tuple[int, ...]


class LayerKind(str, Enum):
    DENSE = 'dense'
    CONV2D = 'conv2d'
    RELU = 'relu'
    MAXPOOL2D = 'maxpool2d'
    FLATTEN = 'flatten'
    SOFTMAX = 'softmax'

    @classmethod
    def parse(cls, value: str) -> 'LayerKind':
        try:
            return cls(value)
        except ValueError:
            raise UnknownLayerKindError(f"unknown layer kind: {value!r}") from None


QUANTIZABLE_KINDS = frozenset({LayerKind.DENSE, LayerKind.CONV2D})

# Hyper-parameters every kind must declare
REQUIRED_HYPER = {
    LayerKind.DENSE: ('in_features', 'out_features'),
    LayerKind.CONV2D: ('in_channels', 'out_channels', 'kernel', 'stride', 'padding'),
    LayerKind.MAXPOOL2D: ('kernel', 'stride'),
    LayerKind.RELU: (),
    LayerKind.FLATTEN: (),
    LayerKind.SOFTMAX: (),
}


@dataclass
class LayerRecord:
    """
    One layer of the chain. Weights are stored output-channel-major:
    dense (out, in), conv2d (out, in, k, k).
    """
    name: str
    kind: LayerKind
    hyper: dict[str, int] = field(default_factory=dict)
    weights: Optional[Tensor] = None
    bias: Optional[Tensor] = None

    @property
    def quantizable(self) -> bool:
        return self.kind in QUANTIZABLE_KINDS

    @property
    def param_count(self) -> int:
        """Number of weight values (biases are not counted)."""
        return 0 if self.weights is None else int(self.weights.size)

    def weight_dims(self) -> Optional[Shape]:
        if self.kind == LayerKind.DENSE:
            return (self.hyper['out_features'], self.hyper['in_features'])
        if self.kind == LayerKind.CONV2D:
            k = self.hyper['kernel']
            return (self.hyper['out_channels'], self.hyper['in_channels'], k, k)
        return None

    def bias_dims(self) -> Optional[Shape]:
        if self.kind == LayerKind.DENSE:
            return (self.hyper['out_features'],)
        if self.kind == LayerKind.CONV2D:
            return (self.hyper['out_channels'],)
        return None

    def validate(self):
        """Check hyper-parameters and weight dims against the layer kind."""
        missing = [key for key in REQUIRED_HYPER[self.kind] if key not in self.hyper]
        if missing:
            raise DimensionMismatchError(self.name, f"missing hyper-parameters {missing}")
        if any(int(v) < 0 for v in self.hyper.values()):
            raise DimensionMismatchError(self.name, "hyper-parameters must be non-negative")

        if not self.quantizable:
            if self.weights is not None or self.bias is not None:
                raise DimensionMismatchError(self.name, f"{self.kind.value} layers carry no tensors")
            return

        if self.weights is None:
            raise DimensionMismatchError(self.name, "quantizable layer without weights")
        expected = self.weight_dims()
        if tuple(self.weights.shape) != expected:
            raise DimensionMismatchError(
                self.name, f"weight dims {list(self.weights.shape)} != expected {list(expected)}"
            )
        if self.bias is not None and tuple(self.bias.shape) != self.bias_dims():
            raise DimensionMismatchError(
                self.name, f"bias dims {list(self.bias.shape)} != expected {list(self.bias_dims())}"
            )

    def output_shape(self, input_shape: Shape) -> Shape:
        """Per-sample output shape for a per-sample input shape."""
        h = self.hyper
        if self.kind == LayerKind.DENSE:
            if input_shape != (h['in_features'],):
                raise ShapeMismatchError(
                    f"layer '{self.name}' expects ({h['in_features']},), got {input_shape}"
                )
            return (h['out_features'],)
        if self.kind == LayerKind.CONV2D:
            if len(input_shape) != 3 or input_shape[0] != h['in_channels']:
                raise ShapeMismatchError(
                    f"layer '{self.name}' expects ({h['in_channels']}, H, W), got {input_shape}"
                )
            _, height, width = input_shape
            k, s, p = h['kernel'], max(1, h['stride']), h['padding']
            out_h = (height + 2 * p - k) // s + 1
            out_w = (width + 2 * p - k) // s + 1
            if out_h <= 0 or out_w <= 0:
                raise ShapeMismatchError(f"layer '{self.name}' produces an empty feature map")
            return (h['out_channels'], out_h, out_w)
        if self.kind == LayerKind.MAXPOOL2D:
            if len(input_shape) != 3:
                raise ShapeMismatchError(f"layer '{self.name}' expects (C, H, W), got {input_shape}")
            channels, height, width = input_shape
            k, s = h['kernel'], max(1, h['stride'])
            out_h = (height - k) // s + 1
            out_w = (width - k) // s + 1
            if out_h <= 0 or out_w <= 0:
                raise ShapeMismatchError(f"layer '{self.name}' produces an empty feature map")
            return (channels, out_h, out_w)
        if self.kind == LayerKind.FLATTEN:
            return (int(np.prod(input_shape)),)
        return input_shape


@dataclass
class ModelGraph:
    """Ordered chain of layers applied to inputs of `input_shape` (per sample)."""
    name: str
    input_shape: Shape
    layers: list[LayerRecord]

    def __post_init__(self):
        self.input_shape = tuple(int(d) for d in self.input_shape)

    def __iter__(self) -> Iterator[LayerRecord]:
        return iter(self.layers)

    def validate(self) -> 'ModelGraph':
        names = [layer.name for layer in self.layers]
        if len(set(names)) != len(names):
            raise ShapeMismatchError(f"duplicate layer names in model '{self.name}'")
        for layer in self.layers:
            layer.validate()
        if not self.quantizable_layers():
            raise ShapeMismatchError(f"model '{self.name}' has no quantizable layer")
        self.layer_shapes()
        return self

    def layer_shapes(self) -> list[tuple[Shape, Shape]]:
        """(input_shape, output_shape) per layer, per sample."""
        shapes = []
        current = self.input_shape
        for layer in self.layers:
            out = layer.output_shape(current)
            shapes.append((current, out))
            current = out
        return shapes

    def input_shapes(self) -> dict[str, Shape]:
        return {layer.name: shape[0] for layer, shape in zip(self.layers, self.layer_shapes())}

    def quantizable_layers(self) -> list[LayerRecord]:
        return [layer for layer in self.layers if layer.quantizable]

    def layer(self, name: str) -> LayerRecord:
        for layer in self.layers:
            if layer.name == name:
                return layer
        raise KeyError(name)

    @property
    def output_shape(self) -> Shape:
        return self.layer_shapes()[-1][1]

    def copy(self) -> 'ModelGraph':
        """Deep copy; tensors are duplicated so the copy can be trained independently."""
        return copy.deepcopy(self)

    def float_size_bytes(self) -> int:
        return sum(layer.param_count for layer in self.quantizable_layers()) * 4
