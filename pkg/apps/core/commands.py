"""
Base class for the management commands.

Every command takes `--config` plus the override flags, runs with a fresh run id as
correlation id, and funnels failures through `handle_command_exception`.
"""
import uuid
from pathlib import Path
from typing import Optional

import numpy as np
from django.core.management.base import BaseCommand

from apps.core.config import RunConfig, load_run_config
from apps.core.exceptions import ShapeMismatchError, handle_command_exception
from apps.core.logging_config import get_logger
from apps.engine.trainer import train_float
from apps.hardware.costs import HwCostTable, load_cost_table
from apps.network.builders import build_lenet, build_mlp
from apps.network.datasets import Dataset, calibration_subset, gen_synthetic, load_idx_dataset, split_dataset
from apps.network.graph import ModelGraph
from apps.network.manifest import load_model, save_model
from apps.planner.orchestrator import PlanningData
from apps.planner.plan import BitPlan, load_plan_file

TRAINED_MODEL_NAME = 'model.json'
PLANNED_MODEL_NAME = 'planned_model.json'
PLAN_NAME = 'plan.json'
TRACE_NAME = 'trace.csv'


class SigmaQuantCommand(BaseCommand):
    """
    Shared plumbing: config loading with CLI overrides, data and model resolution.

    Subclasses implement `run(config, options)`.
    """
    requires_system_checks = []
    requires_migrations_checks = False
    config_required = True

    def add_arguments(self, parser):
        parser.add_argument('--config', required=self.config_required, help='Run configuration (TOML or JSON)')
        parser.add_argument('--seed', type=int, help='Override the run seed')
        parser.add_argument('--out', help='Override the output directory')
        parser.add_argument('--target-acc', type=float, help='Absolute accuracy target (percent)')
        parser.add_argument('--target-size', type=float, help='Absolute size target (bytes)')
        parser.add_argument('--target-bops', type=float, help='Absolute BOPs target')
        parser.add_argument('--delta-a', type=float, help='Accuracy buffer (points)')
        parser.add_argument('--delta-m', type=float, help='Metric buffer (bytes or BOPs)')
        parser.add_argument('--imax', type=int, help='Clustering round cap')
        self.add_command_arguments(parser)

    def add_command_arguments(self, parser):
        pass

    @property
    def command_name(self) -> str:
        return self.__class__.__module__.rsplit('.', 1)[-1]

    def handle(self, *args, **options):
        self.correlation_id = str(uuid.uuid4())
        self.log = get_logger(f"apps.commands.{self.command_name}", self.correlation_id)
        try:
            config = None
            if options.get('config'):
                config = load_run_config(options['config'], options)
                self.log.set_context(seed=config.seed)
            self.run(config, options)
        except Exception as e:
            raise handle_command_exception(e, {'command': self.command_name, 'correlation_id': self.correlation_id})

    def run(self, config: RunConfig, options: dict):
        raise NotImplementedError

    # Helpers shared by the commands

    def output_path(self, config: RunConfig, name: str) -> Path:
        config.output_dir.mkdir(parents=True, exist_ok=True)
        return config.output_dir / name

    def load_dataset(self, config: RunConfig) -> Dataset:
        source = config.dataset
        if source.synthetic is not None:
            s = source.synthetic
            return gen_synthetic(config.seed, s.n, s.d, s.classes, s.separation)
        return load_idx_dataset(source.images, source.labels, source.num_classes)

    def planning_data(self, config: RunConfig, dataset: Dataset) -> PlanningData:
        train, evaluation = split_dataset(dataset, config.dataset.eval_fraction, config.seed)
        calibration = calibration_subset(train, config.dataset.calibration_size, config.seed)
        return PlanningData(train=train, evaluation=evaluation, calibration=calibration)

    def build_model(self, config: RunConfig, dataset: Dataset) -> ModelGraph:
        sample_shape = dataset.inputs.shape[1:]
        if config.model.builder == 'lenet':
            input_shape = sample_shape if len(sample_shape) == 3 else (1, *sample_shape)
            return build_lenet(input_shape, dataset.num_classes, config.seed)
        return build_mlp(int(np.prod(sample_shape)), config.model.hidden, dataset.num_classes, config.seed)

    def shaped(self, dataset: Dataset, model: ModelGraph) -> Dataset:
        """`dataset` with samples reshaped to the model's input shape."""
        if tuple(dataset.inputs.shape[1:]) == tuple(model.input_shape):
            return dataset
        if int(np.prod(dataset.inputs.shape[1:])) != int(np.prod(model.input_shape)):
            raise ShapeMismatchError(
                f"samples of shape {dataset.inputs.shape[1:]} do not fit model input {model.input_shape}"
            )
        inputs = dataset.inputs.reshape(len(dataset), *model.input_shape)
        return Dataset(inputs=inputs, labels=dataset.labels, num_classes=dataset.num_classes)

    def trained_model_path(self, config: RunConfig) -> Path:
        return config.output_dir / TRAINED_MODEL_NAME

    def resolve_model(self, config: RunConfig, dataset: Dataset, data: Optional[PlanningData] = None) -> ModelGraph:
        """
        The configured manifest, else the model a previous `train` left in the output
        directory, else a freshly built model trained in float.
        """
        if config.model.manifest is not None:
            return load_model(config.model.manifest)
        if self.trained_model_path(config).is_file():
            return load_model(self.trained_model_path(config))
        model = self.build_model(config, dataset)
        data = data or self.planning_data(config, self.shaped(dataset, model))
        self.log.info("No trained model found, training a float model first", builder=config.model.builder)
        model = train_float(model, data.train, config.training, self.correlation_id)
        save_model(model, self.trained_model_path(config))
        return model

    def prepare(self, config: RunConfig) -> tuple[ModelGraph, PlanningData]:
        dataset = self.load_dataset(config)
        model = self.resolve_model(config, dataset)
        data = self.planning_data(config, self.shaped(dataset, model))
        return model, data

    def cost_table(self, config: RunConfig) -> HwCostTable:
        return load_cost_table(config.hardware.cost_table)

    def add_plan_arguments(self, parser, required: bool = False):
        parser.add_argument('--plan', required=required, help='Plan file (default: <out>/plan.json)')
        parser.add_argument('--model', help='Model manifest (default: <out>/planned_model.json when present)')

    def planned_inputs(
        self,
        config: RunConfig,
        options: dict,
        require_plan: bool = True,
    ) -> tuple[ModelGraph, Optional[BitPlan], PlanningData]:
        """
        Model, plan and data for commands that consume planner output.

        The model is `--model`, else the planner's trained model when a plan is used, else
        the float model.
        """
        dataset = self.load_dataset(config)
        plan_path = options.get('plan') or (config.output_dir / PLAN_NAME if require_plan else None)
        if options.get('model'):
            model = load_model(options['model'])
        elif plan_path is not None and (config.output_dir / PLANNED_MODEL_NAME).is_file():
            model = load_model(config.output_dir / PLANNED_MODEL_NAME)
        else:
            model = self.resolve_model(config, dataset)

        plan = None
        if plan_path is not None:
            plan, _ = load_plan_file(plan_path)
            plan.check_covers(model)
        return model, plan, self.planning_data(config, self.shaped(dataset, model))
