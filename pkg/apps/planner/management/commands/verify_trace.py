"""
Management command to replay a planning trace and check it against a plan file.
"""
from apps.core.commands import SigmaQuantCommand
from apps.core.exceptions import TraceReplayError
from apps.planner.plan import load_plan_file
from apps.planner.trace import PlanTrace, replay


class Command(SigmaQuantCommand):
    help = 'Replay trace.csv and verify it ends at the bitwidths of plan.json'
    config_required = False

    def add_command_arguments(self, parser):
        parser.add_argument('--trace', required=True, help='Trace CSV written by plan')
        parser.add_argument('--plan', help='Plan file whose bitwidths the replay must reproduce')

    def run(self, config, options):
        trace = PlanTrace.load(options['trace'])
        bits = replay(trace)

        if options.get('plan'):
            plan, document = load_plan_file(options['plan'])
            expected = {entry.name: (entry.bits_w, entry.bits_a) for entry in plan}
            if bits != expected:
                raise TraceReplayError(f"replayed bits {bits} differ from plan {expected}")
            if document.get('status') and document['status'] != trace.final.status:
                raise TraceReplayError(
                    f"trace status {trace.final.status!r} differs from plan status {document['status']!r}"
                )

        self.stdout.write(f"{len(trace)} records, final status {trace.final.status}")
        self.stdout.write(self.style.SUCCESS(
            "replayed: " + ', '.join(f"{name}=W{w}A{a}" for name, (w, a) in bits.items())
        ))
