import json
import logging
import os
import sys

sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), '..', '..')))

from src.utility.logger import ROOT_LOGGER_NAME, get_logger, get_loggers, setup_logging


def _flush() -> None:
    for name in (ROOT_LOGGER_NAME, f'{ROOT_LOGGER_NAME}.monitoring'):
        for handler in logging.getLogger(name).handlers:
            handler.flush()


def _records(path) -> list:
    with open(path) as file:
        return [json.loads(line) for line in file if line.strip()]


def test_logger_names():
    assert get_logger('src.pipeline.runner').name == 'atlascut.pipeline.runner'
    assert get_loggers('monitoring').name == 'atlascut.monitoring'
    assert get_loggers().name == 'atlascut'


def test_file_log_is_json(tmp_path):
    setup_logging(log_schema='batch_json', log_dir=str(tmp_path))
    logger = get_logger('src.atlas.atlas')
    logger.info('subject registered', extra={'subject': 'patient_01', 'ssd': 12.5})
    _flush()
    records = _records(tmp_path / 'all_output.json')
    record = [r for r in records if r['message'] == 'subject registered'][-1]
    assert record['logger'] == 'atlascut.atlas.atlas'
    assert record['subject'] == 'patient_01'
    assert record['level'] == 'INFO'


def test_metrics_go_to_monitoring_file(tmp_path):
    setup_logging(log_dir=str(tmp_path))
    get_loggers('monitoring').metrics({'z': 5, 'iterations': 2}, message='bp slice segmented')
    _flush()
    record = _records(tmp_path / 'monitoring.json')[-1]
    assert record['metrics'] == {'z': 5, 'iterations': 2}
    assert any(r['message'] == 'bp slice segmented' for r in _records(tmp_path / 'all_output.json'))
