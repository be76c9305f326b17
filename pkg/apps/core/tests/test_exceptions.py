import json
import logging

from django.core.management.base import CommandError

from apps.core.exceptions import (
    EXIT_ERROR,
    ConfigError,
    DimensionMismatchError,
    TrainingDivergedError,
    handle_command_exception,
)
from apps.core.logging_config import JsonFormatter, get_logger

CONTEXT = {'command': 'plan', 'correlation_id': 'run-1'}


def test_domain_errors_keep_their_message():
    error = handle_command_exception(ConfigError('dataset.images', 'file not found'), CONTEXT)
    assert isinstance(error, CommandError)
    assert error.returncode == EXIT_ERROR
    assert str(error) == 'ConfigError: dataset.images: file not found'


def test_command_errors_pass_through():
    original = CommandError('stop', returncode=3)
    assert handle_command_exception(original, CONTEXT) is original


def test_io_and_unexpected_errors():
    assert 'I/O error' in str(handle_command_exception(FileNotFoundError('x'), CONTEXT))
    assert 'unexpected error' in str(handle_command_exception(RuntimeError('boom'), CONTEXT))


def test_error_messages():
    assert str(DimensionMismatchError('fc1', 'expected 12 values')) == "layer 'fc1': expected 12 values"
    error = TrainingDivergedError(2, 7)
    assert (error.epoch, error.step) == (2, 7)


def test_json_formatter_merges_context():
    record = logging.LogRecord('apps.planner', logging.INFO, __file__, 1, 'round done', None, None)
    record.correlation_id = 'run-1'
    record.extra_data = {'round': 3, 'zone': 'Target'}
    payload = json.loads(JsonFormatter().format(record))
    assert payload['message'] == 'round done'
    assert payload['correlation_id'] == 'run-1'
    assert (payload['round'], payload['zone']) == (3, 'Target')


def test_bound_loggers_carry_context(caplog):
    log = get_logger('tests.context', 'run-2')
    child = log.bind(seed=5)
    with caplog.at_level(logging.INFO, logger='tests.context'):
        child.info('hello', phase='P1')
        log.info('plain')
    first, second = caplog.records
    assert first.extra_data == {'seed': 5, 'phase': 'P1'}
    assert first.correlation_id == 'run-2'
    assert second.extra_data == {}
