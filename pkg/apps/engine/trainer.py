"""
Float training, quantization-aware training and calibration.

Batches are drawn from a per-epoch permutation seeded with (seed, epoch), so a run is
a pure function of the model, the data and the config. Parameters are trained in
float64 and written back to the float32 model at the end.
"""
import logging
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from apps.core.exceptions import TrainingDivergedError
from apps.core.tracing import PlannerTracing
from apps.engine.engine import Params, collect_layer_inputs, loss_and_grads, model_params, resolve_quantization
from apps.network.datasets import Dataset
from apps.network.graph import ModelGraph
from apps.network.tensors import TENSOR_DTYPE
from apps.quantization.observers import DEFAULT_PERCENTILE, ActObserver
from apps.quantization.quantizer import per_channel_qparams

logger = logging.getLogger(__name__)


class TrainConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra='forbid')

    epochs: int = Field(default=10, ge=0)
    batch_size: int = Field(default=32, gt=0)
    learning_rate: float = Field(default=0.05, ge=0)
    momentum: float = Field(default=0.9, ge=0, lt=1)
    optimizer: Literal['sgd', 'adam'] = 'sgd'
    loss: Literal['cross_entropy'] = 'cross_entropy'
    seed: int = 0


class SGDMomentum:
    def __init__(self, learning_rate: float, momentum: float):
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.velocity: dict[tuple[str, int], np.ndarray] = {}

    def step(self, params: Params, grads):
        for name, layer_grads in grads.items():
            for slot, grad in enumerate(layer_grads):
                if grad is None:
                    continue
                key = (name, slot)
                velocity = self.momentum * self.velocity.get(key, 0.0) + grad
                self.velocity[key] = velocity
                params[name][slot][...] -= self.learning_rate * velocity


class Adam:
    def __init__(self, learning_rate: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.moments: dict[tuple[str, int], tuple[np.ndarray, np.ndarray]] = {}

    def step(self, params: Params, grads):
        self.t += 1
        for name, layer_grads in grads.items():
            for slot, grad in enumerate(layer_grads):
                if grad is None:
                    continue
                key = (name, slot)
                m, v = self.moments.get(key, (0.0, 0.0))
                m = self.beta1 * m + (1 - self.beta1) * grad
                v = self.beta2 * v + (1 - self.beta2) * grad ** 2
                self.moments[key] = (m, v)
                m_hat = m / (1 - self.beta1 ** self.t)
                v_hat = v / (1 - self.beta2 ** self.t)
                params[name][slot][...] -= self.learning_rate * m_hat / (np.sqrt(v_hat) + self.eps)


def make_optimizer(cfg: TrainConfig):
    if cfg.optimizer == 'adam':
        return Adam(cfg.learning_rate)
    return SGDMomentum(cfg.learning_rate, cfg.momentum)


def epoch_order(n: int, seed: int, epoch: int) -> np.ndarray:
    return np.random.Generator(np.random.PCG64([seed, epoch])).permutation(n)


def _write_back(model: ModelGraph, params: Params) -> ModelGraph:
    trained = model.copy()
    for layer in trained.quantizable_layers():
        weights, bias = params[layer.name]
        layer.weights = weights.astype(TENSOR_DTYPE)
        if bias is not None:
            layer.bias = bias.astype(TENSOR_DTYPE)
    return trained


def _run_epochs(
    model: ModelGraph,
    dataset: Dataset,
    cfg: TrainConfig,
    plan=None,
    correlation_id: str = '',
) -> ModelGraph:
    if cfg.epochs == 0 or len(dataset) == 0:
        return model.copy()

    params = model_params(model)
    optimizer = make_optimizer(cfg)
    frozen = plan is not None and len(plan) > 0 and all(entry.weights_frozen for entry in plan)
    quant = resolve_quantization(model, plan, params) if frozen else None

    mode = 'qat' if plan is not None and len(plan) > 0 else 'float'
    with PlannerTracing.stage(f"train_{mode}", correlation_id, epochs=cfg.epochs) as result:
        for epoch in range(cfg.epochs):
            order = epoch_order(len(dataset), cfg.seed, epoch)
            losses = []
            for step, start in enumerate(range(0, len(order), cfg.batch_size)):
                idx = order[start:start + cfg.batch_size]
                step_quant = quant if quant is not None else resolve_quantization(model, plan, params)
                loss, grads = loss_and_grads(model, dataset.inputs[idx], dataset.labels[idx], step_quant, params)
                if not np.isfinite(loss) or not all(np.all(np.isfinite(g[0])) for g in grads.values()):
                    raise TrainingDivergedError(epoch, step)
                optimizer.step(params, grads)
                losses.append(loss)
            logger.debug(
                f"Epoch {epoch} finished",
                extra={
                    'correlation_id': correlation_id,
                    'extra_data': {'mode': mode, 'epoch': epoch, 'mean_loss': float(np.mean(losses))},
                }
            )
        result['final_loss'] = float(np.mean(losses))

    if not all(np.all(np.isfinite(weights)) for weights, _ in params.values()):
        raise TrainingDivergedError(cfg.epochs - 1, -1)
    return _write_back(model, params)


def train_float(model: ModelGraph, dataset: Dataset, cfg: TrainConfig, correlation_id: str = '') -> ModelGraph:
    """Plain float training; returns a new model."""
    return _run_epochs(model, dataset, cfg, None, correlation_id)


def qat_epochs(model: ModelGraph, plan, dataset: Dataset, cfg: TrainConfig, correlation_id: str = '') -> ModelGraph:
    """
    Quantization-aware training under `plan`; bitwidths are never changed here.

    Raises TrainingDivergedError when the loss becomes non-finite.
    """
    return _run_epochs(model, dataset, cfg, plan, correlation_id)


def observe_activations(
    model: ModelGraph,
    calib_set: Dataset,
    batch_size: int = 256,
    percentile: float = DEFAULT_PERCENTILE,
    seed: int = 0,
) -> dict[str, ActObserver]:
    """Float-path observers on the input of every quantizable layer."""
    params = model_params(model)
    observers = {
        layer.name: ActObserver(percentile=percentile, seed=seed + index)
        for index, layer in enumerate(model.quantizable_layers())
    }
    for start in range(0, len(calib_set), batch_size):
        layer_inputs = collect_layer_inputs(model, calib_set.inputs[start:start + batch_size], params)
        for name, values in layer_inputs.items():
            observers[name].update(values)
    return observers


def calibrate(
    model: ModelGraph,
    calib_set: Dataset,
    plan,
    batch_size: int = 256,
    percentile: float = DEFAULT_PERCENTILE,
    seed: int = 0,
    observers: Optional[dict[str, ActObserver]] = None,
):
    """
    Freeze activation ranges and per-channel weight steps for `plan`.

    Activation ranges come from float forward passes, so they do not depend on the
    plan's bitwidths. Pre-computed `observers` may be passed to skip the forward passes.
    """
    if len(calib_set) == 0:
        raise ValueError("calibration set is empty")
    observers = observers or observe_activations(model, calib_set, batch_size, percentile, seed)
    weight_scales = {
        layer.name: per_channel_qparams(layer.weights, plan.layer(layer.name).bits_w).scales
        for layer in model.quantizable_layers()
    }
    act_ranges = {name: (obs.lo, obs.hi) for name, obs in observers.items()}
    return plan.with_calibration(weight_scales, act_ranges)
