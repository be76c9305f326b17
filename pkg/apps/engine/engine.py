"""
Forward and backward passes over a linear-chain ModelGraph.

With a plan, weights of every quantizable layer are fake-quantized per output channel
(frozen steps when the plan carries them) and the input of every quantizable layer is
fake-quantized over its calibrated range. Without a plan, or with an empty one, the pass
is pure float. Gradients through both fake-quant steps use the straight-through
estimator.
"""
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from apps.core.exceptions import ShapeMismatchError
from apps.engine import layers as ops
from apps.network.graph import LayerKind, ModelGraph
from apps.quantization.observers import ActQuantParams, act_ste_mask, fake_quantize_range
from apps.quantization.quantizer import (
    ChannelQuantParams,
    per_channel_qparams,
    quantize_dequantize,
    ste_mask,
)

# name -> (weights, bias) in float64
Params = dict[str, tuple[np.ndarray, Optional[np.ndarray]]]


@dataclass(frozen=True)
class LayerQuant:
    weights: Optional[ChannelQuantParams] = None
    activations: Optional[ActQuantParams] = None


@dataclass
class ForwardCache:
    """Per-layer values kept for the backward pass."""
    inputs: list = field(default_factory=list)
    extras: list = field(default_factory=list)
    effective: dict = field(default_factory=dict)


def model_params(model: ModelGraph) -> Params:
    return {
        layer.name: (
            layer.weights.astype(np.float64),
            layer.bias.astype(np.float64) if layer.bias is not None else None,
        )
        for layer in model.quantizable_layers()
    }


def resolve_quantization(model: ModelGraph, plan, params: Optional[Params] = None) -> dict[str, LayerQuant]:
    """Per-layer quantizers for `plan`; empty for the float path."""
    if plan is None or len(plan) == 0:
        return {}
    plan.check_covers(model)
    params = params or model_params(model)
    resolved = {}
    for entry in plan:
        weights = params[entry.name][0]
        qparams = entry.weight_qparams()
        if qparams is None or len(qparams) != weights.shape[0]:
            qparams = per_channel_qparams(weights, entry.bits_w)
        resolved[entry.name] = LayerQuant(weights=qparams, activations=entry.act_qparams())
    return resolved


def _check_input(model: ModelGraph, inputs: np.ndarray):
    if tuple(inputs.shape[1:]) != model.input_shape:
        raise ShapeMismatchError(
            f"model '{model.name}' expects samples of shape {model.input_shape}, got {tuple(inputs.shape[1:])}"
        )


def forward_pass(
    model: ModelGraph,
    inputs: np.ndarray,
    quant: Optional[dict[str, LayerQuant]] = None,
    params: Optional[Params] = None,
    keep_cache: bool = False,
    fuse_softmax: bool = True,
):
    """
    Run the chain and return (logits, cache). A trailing softmax is skipped when
    `fuse_softmax` is set so that logits feed the fused cross-entropy.
    """
    x = np.asarray(inputs, dtype=np.float64)
    _check_input(model, x)
    quant = quant or {}
    params = params or model_params(model)
    cache = ForwardCache() if keep_cache else None

    last = len(model.layers) - 1
    for index, layer in enumerate(model.layers):
        extra = None
        layer_input = x
        h = layer.hyper
        if layer.quantizable:
            weights, bias = params[layer.name]
            lq = quant.get(layer.name)
            if lq is not None:
                if lq.activations is not None:
                    x = fake_quantize_range(x, lq.activations)
                weights = quantize_dequantize(weights, lq.weights)
            if cache is not None:
                cache.effective[layer.name] = weights
            if layer.kind == LayerKind.DENSE:
                out = ops.dense_forward(x, weights, bias)
                extra = x
            else:
                out, cols = ops.conv2d_forward(x, weights, bias, max(1, h['stride']), h['padding'])
                extra = cols
        elif layer.kind == LayerKind.RELU:
            out = ops.relu_forward(x)
        elif layer.kind == LayerKind.MAXPOOL2D:
            out, extra = ops.maxpool_forward(x, h['kernel'], max(1, h['stride']))
        elif layer.kind == LayerKind.FLATTEN:
            out = x.reshape(x.shape[0], -1)
        elif layer.kind == LayerKind.SOFTMAX:
            if index == last and fuse_softmax:
                out = x
            else:
                out = ops.softmax(x)
                extra = out
        else:
            raise ShapeMismatchError(f"unsupported layer kind {layer.kind}")

        if cache is not None:
            cache.inputs.append(layer_input)
            cache.extras.append(extra)
        x = out
    return x, cache


def forward(model: ModelGraph, batch: np.ndarray, plan=None) -> np.ndarray:
    """Logits of `batch` under `plan` (float path when `plan` is None or empty)."""
    logits, _ = forward_pass(model, batch, resolve_quantization(model, plan))
    return logits


def backward_pass(
    model: ModelGraph,
    cache: ForwardCache,
    grad_logits: np.ndarray,
    quant: Optional[dict[str, LayerQuant]] = None,
    params: Optional[Params] = None,
) -> dict[str, tuple[np.ndarray, Optional[np.ndarray]]]:
    """Gradients (dW, db) per quantizable layer, with STE masks on fake-quant steps."""
    quant = quant or {}
    params = params or model_params(model)
    grads = {}
    grad = grad_logits
    last = len(model.layers) - 1

    for index in range(last, -1, -1):
        layer = model.layers[index]
        layer_input = cache.inputs[index]
        extra = cache.extras[index]
        h = layer.hyper

        if layer.quantizable:
            weights, bias = params[layer.name]
            effective = cache.effective[layer.name]
            if layer.kind == LayerKind.DENSE:
                dx, dw, db = ops.dense_backward(grad, extra, effective)
            else:
                dx, dw, db = ops.conv2d_backward(
                    grad, extra, layer_input.shape, effective, max(1, h['stride']), h['padding']
                )
            lq = quant.get(layer.name)
            if lq is not None:
                dw = dw * ste_mask(weights, lq.weights)
                if lq.activations is not None:
                    dx = dx * act_ste_mask(layer_input, lq.activations)
            grads[layer.name] = (dw, db if bias is not None else None)
            grad = dx
        elif layer.kind == LayerKind.RELU:
            grad = ops.relu_backward(grad, layer_input)
        elif layer.kind == LayerKind.MAXPOOL2D:
            grad = ops.maxpool_backward(grad, extra, layer_input.shape, h['kernel'], max(1, h['stride']))
        elif layer.kind == LayerKind.FLATTEN:
            grad = grad.reshape(layer_input.shape)
        elif layer.kind == LayerKind.SOFTMAX and extra is not None:
            grad = ops.softmax_backward(grad, extra)
    return grads


def loss_and_grads(model: ModelGraph, inputs: np.ndarray, labels: np.ndarray, quant=None, params=None):
    """Mean cross-entropy of a batch and its parameter gradients."""
    logits, cache = forward_pass(model, inputs, quant, params, keep_cache=True)
    loss, grad = ops.softmax_cross_entropy(logits, labels)
    return loss, backward_pass(model, cache, grad, quant, params)


def collect_layer_inputs(model: ModelGraph, inputs: np.ndarray, params: Optional[Params] = None) -> dict[str, np.ndarray]:
    """Float-path input tensor of every quantizable layer for one batch."""
    _, cache = forward_pass(model, inputs, None, params, keep_cache=True)
    return {
        layer.name: cache.inputs[index]
        for index, layer in enumerate(model.layers)
        if layer.quantizable
    }
