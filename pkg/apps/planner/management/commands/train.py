"""
Management command to train the float model.
"""
from apps.core.commands import SigmaQuantCommand
from apps.engine.evaluation import evaluate_accuracy
from apps.engine.trainer import train_float
from apps.network.manifest import save_model


class Command(SigmaQuantCommand):
    help = 'Train the float model and write it to <out>/model.json'

    def add_command_arguments(self, parser):
        parser.add_argument('--epochs', type=int, help='Override training.epochs')

    def run(self, config, options):
        dataset = self.load_dataset(config)
        model = self.build_model(config, dataset)
        data = self.planning_data(config, self.shaped(dataset, model))

        cfg = config.training
        if options.get('epochs') is not None:
            cfg = cfg.model_copy(update={'epochs': options['epochs']})
        model = train_float(model, data.train, cfg, self.correlation_id)

        path = self.trained_model_path(config)
        save_model(model, path)
        report = evaluate_accuracy(model, data.evaluation)
        self.log.info("Float model trained", accuracy=report.top1_accuracy, path=str(path))

        self.stdout.write(f"model: {path}")
        self.stdout.write(self.style.SUCCESS(
            f"float accuracy {report.top1_accuracy:.2f}% (loss {report.loss:.4f}, {report.samples} samples)"
        ))
