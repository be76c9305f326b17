import numpy as np
import pytest

from apps.core.exceptions import TrainingDivergedError
from apps.engine.engine import collect_layer_inputs
from apps.engine.evaluation import evaluate_accuracy
from apps.engine.trainer import TrainConfig, calibrate, qat_epochs, train_float
from apps.network.builders import build_mlp
from apps.network.datasets import Dataset, gen_synthetic, split_dataset
from apps.planner.plan import BitPlan


@pytest.fixture
def split(blobs):
    return split_dataset(blobs, 0.2, seed=0)


@pytest.fixture
def trained(tiny_mlp, split):
    return train_float(tiny_mlp, split[0], TrainConfig(epochs=10))


def _weights(model):
    return [layer.weights for layer in model.quantizable_layers()]


def test_float_training_separates_blobs(trained, split):
    assert evaluate_accuracy(trained, split[1]).top1_accuracy >= 95.0


@pytest.mark.parametrize('cfg', [TrainConfig(epochs=0), TrainConfig(epochs=3, learning_rate=0.0)])
def test_training_without_steps_leaves_weights_unchanged(tiny_mlp, split, cfg):
    for before, after in zip(_weights(tiny_mlp), _weights(train_float(tiny_mlp, split[0], cfg))):
        np.testing.assert_array_equal(before, after)


def test_training_is_deterministic(tiny_mlp, split):
    cfg = TrainConfig(epochs=2, seed=7)
    first = train_float(tiny_mlp, split[0], cfg)
    second = train_float(tiny_mlp, split[0], cfg)
    for a, b in zip(_weights(first), _weights(second)):
        np.testing.assert_array_equal(a, b)


def test_adam_training_also_converges(tiny_mlp, split):
    model = train_float(tiny_mlp, split[0], TrainConfig(epochs=5, optimizer='adam', learning_rate=0.01))
    assert evaluate_accuracy(model, split[1]).top1_accuracy >= 90.0


def test_non_finite_loss_raises(tiny_mlp):
    data = Dataset(np.full((8, 8), np.nan, dtype=np.float32), np.zeros(8, dtype=np.int64), 4)
    with pytest.raises(TrainingDivergedError) as info:
        train_float(tiny_mlp, data, TrainConfig(epochs=1, batch_size=4))
    assert (info.value.epoch, info.value.step) == (0, 0)


def test_calibration_is_repeatable(trained, split):
    plan = BitPlan.uniform(trained)
    assert calibrate(trained, split[0], plan) == calibrate(trained, split[0], plan)


def test_calibrated_range_lies_inside_observed_activations(trained, split):
    plan = calibrate(trained, split[0], BitPlan.uniform(trained))
    inputs = collect_layer_inputs(trained, split[0].inputs)
    for entry in plan:
        assert entry.act_hi <= inputs[entry.name].max()
        assert entry.act_lo >= inputs[entry.name].min()
    assert plan.calibrated


def test_activation_ranges_do_not_depend_on_weight_bits(trained, split):
    wide = calibrate(trained, split[0], BitPlan.uniform(trained, bits_w=8))
    narrow = calibrate(trained, split[0], BitPlan.uniform(trained, bits_w=2))
    for a, b in zip(wide, narrow):
        assert (a.act_lo, a.act_hi) == (b.act_lo, b.act_hi)
        assert a.weight_scales != b.weight_scales


def test_eight_bit_qat_tracks_float_accuracy(trained, split):
    float_acc = evaluate_accuracy(trained, split[1]).top1_accuracy
    plan = calibrate(trained, split[0], BitPlan.uniform(trained))
    model = qat_epochs(trained, plan, split[0], TrainConfig(epochs=2, learning_rate=0.01))
    assert evaluate_accuracy(model, split[1], plan).top1_accuracy >= float_acc - 1.0


def test_untrained_model_is_near_chance_without_structure():
    data = gen_synthetic(seed=3, n=2000, d=8, classes=10, separation=0.0)
    report = evaluate_accuracy(build_mlp(8, (16,), 10, seed=0), data)
    assert 5.0 <= report.top1_accuracy <= 15.0
    assert report.samples == 2000
