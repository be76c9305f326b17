"""
Management command to write per-layer sensitivity statistics.
"""
import csv
import io

from apps.core.commands import SigmaQuantCommand
from apps.network.manifest import write_text_atomic
from apps.quantization.quantizer import VALID_BITS
from apps.quantization.stats import sensitivity_scores

STATS_SCHEMA_VERSION = 1


def stats_csv(records) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator='\n')
    writer.writerow(['schema_version', 'layer', 'index', 'bits', 'sigma',
                     *(f"kl@{bits}" for bits in VALID_BITS), 'normalized_kl'])
    for r in records:
        writer.writerow([
            STATS_SCHEMA_VERSION, r.layer, r.index, r.bits, repr(r.sigma),
            *(repr(r.kl_at_bits[bits]) for bits in VALID_BITS), repr(r.normalized_kl),
        ])
    return buffer.getvalue()


class Command(SigmaQuantCommand):
    help = 'Write sigma, KL at every bitwidth and normalized KL per quantizable layer'

    def add_command_arguments(self, parser):
        self.add_plan_arguments(parser)

    def run(self, config, options):
        model, plan, _ = self.planned_inputs(config, options, require_plan=False)
        text = stats_csv(sensitivity_scores(model, plan))
        path = self.output_path(config, 'stats.csv')
        write_text_atomic(path, text)
        self.stdout.write(text, ending='')
        self.stdout.write(self.style.SUCCESS(f"stats: {path}"))
