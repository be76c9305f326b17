"""
Top-1 evaluation under an optional bit plan.
"""
from dataclasses import dataclass

import numpy as np

from apps.engine.engine import forward_pass, model_params, resolve_quantization
from apps.network.datasets import Dataset
from apps.network.graph import ModelGraph

EVAL_BATCH_SIZE = 256


@dataclass(frozen=True)
class EvalReport:
    top1_accuracy: float
    loss: float
    samples: int
    correct: int


def evaluate_accuracy(
    model: ModelGraph,
    dataset: Dataset,
    plan=None,
    batch_size: int = EVAL_BATCH_SIZE,
) -> EvalReport:
    """
    Top-1 accuracy (percent) and mean cross-entropy over the whole dataset.

    Correct predictions are summed as integers, so the result does not depend on the
    batch size or order.
    """
    if len(dataset) == 0:
        raise ValueError("cannot evaluate on an empty dataset")

    params = model_params(model)
    quant = resolve_quantization(model, plan, params)
    correct = 0
    loss_sum = 0.0
    for start in range(0, len(dataset), batch_size):
        labels = dataset.labels[start:start + batch_size]
        logits, _ = forward_pass(model, dataset.inputs[start:start + batch_size], quant, params)
        correct += int(np.sum(np.argmax(logits, axis=1) == labels))
        shifted = logits - logits.max(axis=1, keepdims=True)
        log_norm = np.log(np.exp(shifted).sum(axis=1))
        loss_sum += float(np.sum(log_norm - shifted[np.arange(len(labels)), labels]))

    return EvalReport(
        top1_accuracy=100.0 * correct / len(dataset),
        loss=loss_sum / len(dataset),
        samples=len(dataset),
        correct=correct,
    )
