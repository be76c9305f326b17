"""
Management command to run the bitwidth planner.

Exit codes: 0 when both targets are met, 2 when the targets are infeasible within the
clustering rounds, 3 when refinement ended by reverting to the best recorded plan.
"""
from django.core.management.base import CommandError

from apps.core.commands import PLAN_NAME, PLANNED_MODEL_NAME, TRACE_NAME, SigmaQuantCommand
from apps.core.exceptions import EXIT_INFEASIBLE, EXIT_REVERTED
from apps.engine.evaluation import evaluate_accuracy
from apps.hardware.accounting import int8_bops, int8_size_bytes
from apps.network.manifest import save_model
from apps.planner.budget import estimate_search_cost
from apps.planner.orchestrator import PlanStatus, run_sigmaquant
from apps.planner.plan import save_plan
from apps.planner.targets import resolve_targets
from apps.planner.trace import observed_budget

EXIT_CODES = {
    PlanStatus.INFEASIBLE: EXIT_INFEASIBLE,
    PlanStatus.REVERTED: EXIT_REVERTED,
}


class Command(SigmaQuantCommand):
    help = 'Plan per-layer bitwidths for the accuracy and size/BOPs targets'

    def run(self, config, options):
        model, data = self.prepare(config)
        float_report = evaluate_accuracy(model, data.evaluation)
        targets = resolve_targets(config.targets, float_report.top1_accuracy, int8_size_bytes(model), int8_bops(model))

        result = run_sigmaquant(
            model, data, targets, config.budget, config.seed,
            train_config=config.training, correlation_id=self.correlation_id,
        )

        save_plan(result.plan, self.output_path(config, PLAN_NAME), target=targets.describe(), status=result.status.value)
        result.trace.save(self.output_path(config, TRACE_NAME))
        save_model(result.model, self.output_path(config, PLANNED_MODEL_NAME))

        self.write_summary(config, float_report.top1_accuracy, targets, result)
        if result.status in EXIT_CODES:
            raise CommandError(f"planner finished with status {result.status.value}", returncode=EXIT_CODES[result.status])

    def write_summary(self, config, float_accuracy, targets, result):
        m, p1 = result.measurement, result.phase1_measurement
        unit = 'bytes' if targets.target_metric.value == 'size' else 'BOPs'
        self.stdout.write(f"float accuracy    {float_accuracy:.2f}%")
        self.stdout.write(f"targets           A >= {targets.accuracy:.2f}%, {targets.target_metric.value} <= {targets.metric:.0f} {unit}")
        self.stdout.write(f"after clustering  A {p1.accuracy:.2f}%, size {p1.size_bytes} bytes, BOPs {p1.bops}")
        self.stdout.write(f"final             A {m.accuracy:.2f}%, size {m.size_bytes} bytes, BOPs {m.bops}")
        self.stdout.write(f"bits              {', '.join(f'{e.name}=W{e.bits_w}A{e.bits_a}' for e in result.plan)}")

        epoch_seconds = result.mean_epoch_seconds
        configured = estimate_search_cost(config.budget, epoch_seconds)
        observed = estimate_search_cost(observed_budget(result.trace, config.budget), epoch_seconds)
        self.stdout.write(
            f"search cost       {observed:.1f} s observed, {configured:.1f} s at the round caps "
            f"({epoch_seconds:.3f} s per QAT epoch)"
        )

        style = self.style.SUCCESS if result.status == PlanStatus.TARGET_MET else self.style.WARNING
        self.stdout.write(style(f"status            {result.status.value}"))
