"""
Closed-form accounting of a planned model: MACs, size, BOPs and shift-add cycles.
"""
from typing import Optional

import numpy as np

from apps.core.exceptions import ShapeMismatchError
from apps.hardware.shift_add import code_add_events, code_cycles
from apps.network.graph import LayerKind, LayerRecord, ModelGraph
from apps.quantization.quantizer import ChannelQuantParams, per_channel_qparams, quantize_codes


def reuse_count(layer: LayerRecord, input_shape: Optional[tuple] = None) -> int:
    """MAC events per weight and sample: output positions for conv, 1 for dense."""
    if layer.kind == LayerKind.CONV2D:
        if input_shape is None:
            raise ShapeMismatchError(f"layer '{layer.name}': conv MACs need the input shape")
        _, out_h, out_w = layer.output_shape(tuple(input_shape))
        return out_h * out_w
    return 1


def macs_per_layer(layer: LayerRecord, input_shape: Optional[tuple] = None) -> int:
    """dense: in*out; conv2d: OH*OW*out_c*in_c*k*k; 0 for other kinds."""
    h = layer.hyper
    if layer.kind == LayerKind.DENSE:
        return h['in_features'] * h['out_features']
    if layer.kind == LayerKind.CONV2D:
        k = h['kernel']
        return reuse_count(layer, input_shape) * h['out_channels'] * h['in_channels'] * k * k
    return 0


def model_macs(model: ModelGraph) -> dict[str, int]:
    shapes = model.input_shapes()
    return {layer.name: macs_per_layer(layer, shapes[layer.name]) for layer in model.quantizable_layers()}


def layer_size_bytes(param_count: int, bits: int) -> int:
    """ceil(params * bits / 8)."""
    return (param_count * bits + 7) // 8


def model_size_bytes(model: ModelGraph, plan) -> int:
    """Weight storage only; biases are excluded."""
    plan.check_covers(model)
    return sum(
        layer_size_bytes(layer.param_count, plan.layer(layer.name).bits_w)
        for layer in model.quantizable_layers()
    )


def int8_size_bytes(model: ModelGraph) -> int:
    return sum(layer_size_bytes(layer.param_count, 8) for layer in model.quantizable_layers())


def bops(model: ModelGraph, plan) -> int:
    """Σ bits_w * bits_a * MACs over quantizable layers."""
    plan.check_covers(model)
    macs = model_macs(model)
    return sum(
        entry.bits_w * entry.bits_a * macs[entry.name]
        for entry in plan
    )


def int8_bops(model: ModelGraph) -> int:
    return 64 * sum(model_macs(model).values())


def _weight_codes(layer: LayerRecord, bits_w: int, qparams: Optional[ChannelQuantParams]) -> np.ndarray:
    if qparams is None or qparams.bits != bits_w:
        qparams = per_channel_qparams(layer.weights, bits_w)
    return quantize_codes(layer.weights, qparams)


def layer_cycles(
    layer: LayerRecord,
    bits_w: int,
    qparams: Optional[ChannelQuantParams] = None,
    input_shape: Optional[tuple] = None,
) -> int:
    """Σ over weights of shift-add cycles times the weight's MAC reuse, per sample."""
    if not layer.quantizable:
        return 0
    codes = _weight_codes(layer, bits_w, qparams)
    return int(code_cycles(codes, bits_w).sum()) * reuse_count(layer, input_shape)


def layer_add_events(
    layer: LayerRecord,
    bits_w: int,
    qparams: Optional[ChannelQuantParams] = None,
    input_shape: Optional[tuple] = None,
) -> int:
    if not layer.quantizable:
        return 0
    codes = _weight_codes(layer, bits_w, qparams)
    return int(code_add_events(codes, bits_w).sum()) * reuse_count(layer, input_shape)
