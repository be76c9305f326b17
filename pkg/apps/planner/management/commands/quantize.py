"""
Management command to write a model whose weights are the fake-quantized values of a plan.
"""
from apps.core.commands import SigmaQuantCommand
from apps.engine.engine import model_params, resolve_quantization
from apps.engine.trainer import calibrate
from apps.network.manifest import save_model
from apps.network.tensors import TENSOR_DTYPE
from apps.quantization.quantizer import quantize_dequantize


class Command(SigmaQuantCommand):
    help = 'Apply a plan to the model weights and write <out>/quantized_model.json'

    def add_command_arguments(self, parser):
        self.add_plan_arguments(parser)

    def run(self, config, options):
        model, plan, data = self.planned_inputs(config, options)
        if not plan.calibrated:
            plan = calibrate(model, data.calibration, plan, seed=config.seed)

        quant = resolve_quantization(model, plan, model_params(model))
        quantized = model.copy()
        for layer in quantized.quantizable_layers():
            layer.weights = quantize_dequantize(layer.weights, quant[layer.name].weights).astype(TENSOR_DTYPE)

        path = self.output_path(config, 'quantized_model.json')
        save_model(quantized, path, extra={'plan': plan.to_dict()})
        self.stdout.write(self.style.SUCCESS(f"quantized model: {path}"))
