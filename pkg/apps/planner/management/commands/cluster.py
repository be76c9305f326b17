"""
Management command to run one clustering step and show the resulting bitwidths.
"""
import csv
import io

from apps.core.commands import SigmaQuantCommand
from apps.network.manifest import write_text_atomic
from apps.planner.plan import assign_bitwidths, save_plan
from apps.quantization.clustering import adaptive_kmeans, cluster_bits
from apps.quantization.stats import layer_sigma

CLUSTER_SCHEMA_VERSION = 1


class Command(SigmaQuantCommand):
    help = 'Cluster layers by weight standard deviation and map clusters to bitwidths'

    def add_command_arguments(self, parser):
        parser.add_argument('--lambda', dest='lam', type=float, help='Size penalty (default: budget.lambda_start)')
        parser.add_argument('--clusters', type=int, help='Number of clusters (default: budget.clusters)')

    def run(self, config, options):
        model, _ = self.prepare(config)
        layers = model.quantizable_layers()
        names = [layer.name for layer in layers]
        sigmas = [layer_sigma(layer.weights) for layer in layers]

        lam = options['lam'] if options.get('lam') is not None else config.budget.lambda_start
        k = min(options.get('clusters') or config.budget.clusters, len(sigmas))
        clusters = adaptive_kmeans(sigmas, k, lam, seed=config.seed, restarts=config.budget.restarts)
        bits = cluster_bits(clusters)

        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator='\n')
        writer.writerow(['schema_version', 'layer', 'sigma', 'cluster', 'bits_w'])
        for name, sigma, cluster, b in zip(names, sigmas, clusters.assignment, bits):
            writer.writerow([CLUSTER_SCHEMA_VERSION, name, repr(sigma), int(cluster), b])
        write_text_atomic(self.output_path(config, 'clusters.csv'), buffer.getvalue())
        save_plan(
            assign_bitwidths(clusters, names),
            self.output_path(config, 'cluster_plan.json'),
            target={'lambda': lam, 'clusters': k},
        )

        self.stdout.write(buffer.getvalue(), ending='')
        self.stdout.write(self.style.SUCCESS(
            f"lambda {lam}: objective {clusters.objective:.6g}, sizes {list(clusters.sizes)}"
        ))
