"""
Management command to train uniform-precision baselines for comparison with the planner.
"""
from apps.core.commands import SigmaQuantCommand
from apps.planner.baselines import save_baseline, uniform_baseline


class Command(SigmaQuantCommand):
    help = 'QAT at uniform W{2,4,6,8}A8 and write <out>/baseline.csv'

    def add_command_arguments(self, parser):
        parser.add_argument('--epochs', type=int, help='QAT epochs per bitwidth (default: budget.phase1_epochs)')

    def run(self, config, options):
        model, data = self.prepare(config)
        epochs = options['epochs'] if options.get('epochs') is not None else config.budget.phase1_epochs
        rows = uniform_baseline(model, data, config.training, epochs, config.seed, correlation_id=self.correlation_id)

        path = self.output_path(config, 'baseline.csv')
        save_baseline(rows, path)
        for row in rows:
            self.stdout.write(f"W{row.bits}A8  {row.accuracy:6.2f}%  {row.size_bytes} bytes  {row.bops} BOPs")
        self.stdout.write(self.style.SUCCESS(f"baseline: {path}"))
