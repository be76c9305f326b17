"""
Management command to write the hardware cost report of a plan.
"""
from apps.core.commands import SigmaQuantCommand
from apps.core.tracing import PlannerTracing
from apps.hardware.costs import load_cost_table
from apps.hardware.report import comparison_reports, energy_report, report_csv, report_document, report_json
from apps.network.manifest import write_text_atomic


class Command(SigmaQuantCommand):
    help = 'Energy, cycles, size, BOPs and area of a plan against INT8 and uniform A8W{2,4,6,8}'

    def add_command_arguments(self, parser):
        self.add_plan_arguments(parser)
        parser.add_argument('--cost-table', help='Cost table (TOML or JSON); overrides hardware.cost_table')

    def run(self, config, options):
        model, plan, _ = self.planned_inputs(config, options)
        table = load_cost_table(options['cost_table']) if options.get('cost_table') else self.cost_table(config)

        with PlannerTracing.stage('hw_report', self.correlation_id, layers=len(plan)):
            document = report_document(energy_report(model, plan, table), comparison_reports(model, table), table)

        write_text_atomic(self.output_path(config, 'report.json'), report_json(document))
        write_text_atomic(self.output_path(config, 'report.csv'), report_csv(document))

        for row in document['summary']:
            self.stdout.write(
                f"{row['label']:<10} energy {row['energy_pj']:.1f} pJ  cycles {row['cycles']}  "
                f"size {row['size_bytes']} B  BOPs {row['bops']}"
            )
        if table.non_physical:
            self.stdout.write(self.style.WARNING("cost table energies are placeholders (non_physical)"))
        self.stdout.write(self.style.SUCCESS(f"area ratio shift-add / int8: {document['area_ratio_shift_add_vs_int8']:.4f}"))
