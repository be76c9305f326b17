"""
Management command to evaluate a model, optionally under a plan.
"""
import json

from apps.core.commands import SigmaQuantCommand
from apps.engine.evaluation import evaluate_accuracy
from apps.engine.trainer import calibrate
from apps.hardware.accounting import bops, model_size_bytes
from apps.network.manifest import write_text_atomic

EVAL_SCHEMA_VERSION = 1


class Command(SigmaQuantCommand):
    help = 'Top-1 accuracy on the held-out split (float, or under --plan)'

    def add_command_arguments(self, parser):
        self.add_plan_arguments(parser)

    def run(self, config, options):
        model, plan, data = self.planned_inputs(config, options, require_plan=False)
        if plan is not None and not plan.calibrated:
            plan = calibrate(model, data.calibration, plan, seed=config.seed)

        report = evaluate_accuracy(model, data.evaluation, plan)
        document = {
            'schema_version': EVAL_SCHEMA_VERSION,
            'plan': str(options['plan']) if options.get('plan') else None,
            'accuracy': round(report.top1_accuracy, 6),
            'loss': round(report.loss, 6),
            'samples': report.samples,
            'correct': report.correct,
        }
        if plan is not None:
            document['size_bytes'] = model_size_bytes(model, plan)
            document['bops'] = bops(model, plan)

        write_text_atomic(self.output_path(config, 'eval.json'), json.dumps(document, indent=2, sort_keys=True) + '\n')
        self.stdout.write(self.style.SUCCESS(
            f"accuracy {report.top1_accuracy:.2f}% ({report.correct}/{report.samples}), loss {report.loss:.4f}"
        ))
