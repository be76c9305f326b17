"""
Management command to plot a planning trace as an accuracy-vs-metric path.
"""
import matplotlib

matplotlib.use('Agg')
import matplotlib.pyplot as plt  # noqa: E402

from apps.core.commands import SigmaQuantCommand  # noqa: E402
from apps.planner.baselines import load_baseline  # noqa: E402
from apps.planner.plan import load_plan_file  # noqa: E402
from apps.planner.trace import PlanTrace  # noqa: E402

ZONE_COLORS = {
    'Target': 'tab:green',
    'Iteration': 'tab:blue',
    'BitIncrease': 'tab:orange',
    'BitDecrease': 'tab:purple',
    'Transition': 'tab:olive',
    'Abandon': 'tab:red',
}


def plot_trace(trace: PlanTrace, path, target: dict = None, baseline=None):
    """
    Draw the learning path. `target` is the plan file's target block; the metric axis
    follows its `metric` field (size by default).
    """
    target = target or {}
    use_bops = target.get('metric') == 'bops'
    metric_of = (lambda r: r.bops) if use_bops else (lambda r: r.size_bytes)
    records = list(trace)

    fig, ax = plt.subplots(figsize=(7, 5))
    ax.plot([metric_of(r) for r in records], [r.accuracy for r in records], color='0.6', linewidth=1, zorder=1)
    for zone, color in ZONE_COLORS.items():
        points = [r for r in records if r.zone == zone]
        if points:
            ax.scatter([metric_of(r) for r in points], [r.accuracy for r in points], color=color, label=zone, zorder=2)
    for r in records:
        ax.annotate(str(r.round), (metric_of(r), r.accuracy), fontsize=7, xytext=(3, 3), textcoords='offset points')

    if 'accuracy' in target and 'value' in target:
        ax.axhline(target['accuracy'], color='k', linestyle='--', linewidth=1)
        ax.axvline(target['value'], color='k', linestyle='--', linewidth=1)
        ax.axhspan(target['accuracy'] - target.get('delta_a', 0), target['accuracy'], color='tab:green', alpha=0.08)
        ax.axvspan(target['value'], target['value'] + target.get('delta_m', 0), color='tab:green', alpha=0.08)

    if baseline:
        xs = [row.bops if use_bops else row.size_bytes for row in baseline]
        ax.plot(xs, [row.accuracy for row in baseline], marker='s', linestyle=':', color='tab:gray', label='uniform')
        for row, x in zip(baseline, xs):
            ax.annotate(f"W{row.bits}", (x, row.accuracy), fontsize=7, xytext=(3, -9), textcoords='offset points')

    ax.set_xlabel('BOPs' if use_bops else 'size (bytes)')
    ax.set_ylabel('top-1 accuracy (%)')
    ax.legend(fontsize=8)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


class Command(SigmaQuantCommand):
    help = 'Render trace.csv (and optionally baseline.csv) to a PNG'
    config_required = False

    def add_command_arguments(self, parser):
        parser.add_argument('--trace', required=True, help='Trace CSV written by plan')
        parser.add_argument('--plan', help='Plan file, for the target lines')
        parser.add_argument('--baseline', help='baseline.csv to overlay')
        parser.add_argument('--png', required=True, help='Output image path')

    def run(self, config, options):
        trace = PlanTrace.load(options['trace'])
        target = load_plan_file(options['plan'])[1].get('target') if options.get('plan') else None
        baseline = load_baseline(options['baseline']) if options.get('baseline') else None
        plot_trace(trace, options['png'], target, baseline)
        self.stdout.write(self.style.SUCCESS(f"plot: {options['png']}"))
