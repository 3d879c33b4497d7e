import json
import logging
import logging.config
import os
from typing import Any, Dict, Optional

import yaml

# Set default log directory if the environment variable is not set
if 'LOCAL_LOGS' not in os.environ:
    os.environ['LOCAL_LOGS'] = './logs'

ROOT_LOGGER_NAME = 'atlascut'
CONFIG_DIR = os.path.join(os.path.dirname(__file__), 'config')
LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'

_RESERVED = set(vars(logging.makeLogRecord({})).keys()) | {'message', 'asctime'}


def _extra_fields(record: logging.LogRecord) -> Dict[str, Any]:
    return {k: v for k, v in vars(record).items() if k not in _RESERVED}


class BatchJsonRootFormatter(logging.Formatter):
    """One JSON object per line, carrying every `extra=` field of the record."""

    def format(self, record: logging.LogRecord) -> str:
        payload: Dict[str, Any] = {
            'time': self.formatTime(record, '%Y-%m-%d %H:%M:%S'),
            'level': record.levelname,
            'logger': record.name,
            'module': record.module,
            'function': record.funcName,
            'message': record.getMessage(),
        }
        payload.update(_extra_fields(record))
        if record.exc_info:
            payload['exception'] = self.formatException(record.exc_info)
        return json.dumps(payload, default=str)


class JsonStdoutFormatter(logging.Formatter):
    """Pipe-delimited prefix (from the schema's `format`) followed by a JSON body."""

    def format(self, record: logging.LogRecord) -> str:
        prefix = super().format(record)
        body: Dict[str, Any] = {'message': record.getMessage()}
        body.update(_extra_fields(record))
        return prefix + json.dumps(body, default=str)


class MetricsLogger(logging.Logger):
    """Logger with a `metrics` helper for structured measurements."""

    def metrics(self, values: Dict[str, Any], message: str = 'metrics', level: int = logging.INFO) -> None:
        """
        Emits a record whose `metrics` field holds the given values.

        Args:
            values (Dict[str, Any]): Measurement name to value.
            message (str): Human-readable message for the record.
            level (int): Logging level, INFO by default.
        """
        if self.isEnabledFor(level):
            self._log(level, message, (), extra={'metrics': dict(values)})


logging.setLoggerClass(MetricsLogger)


def setup_logging(log_schema: str = 'batch_json', log_dir: Optional[str] = None) -> None:
    """
    Configures logging from `config/log_<log_schema>.yaml`.

    File handler paths in the schema are resolved inside the log directory, which
    defaults to the LOCAL_LOGS environment variable.

    Args:
        log_schema (str): Suffix of the YAML schema file to load.
        log_dir (str, optional): Overrides LOCAL_LOGS for this call.
    """
    log_dir = log_dir or os.environ['LOCAL_LOGS']
    os.makedirs(log_dir, exist_ok=True)

    schema_path = os.path.join(CONFIG_DIR, f'log_{log_schema}.yaml')
    with open(schema_path, 'r') as file:
        schema = yaml.safe_load(file)

    for handler in schema.get('handlers', {}).values():
        if 'filename' in handler:
            handler['filename'] = os.path.join(log_dir, handler['filename'])

    logging.config.dictConfig(schema)


def get_loggers(name: Optional[str] = None) -> MetricsLogger:
    """
    Returns the package root logger, or the named child of it (e.g. 'monitoring').
    """
    full_name = ROOT_LOGGER_NAME if not name else f'{ROOT_LOGGER_NAME}.{name}'
    return logging.getLogger(full_name)


def get_logger(name: str, level: Optional[int] = None) -> MetricsLogger:
    """
    Retrieves a logger under the package root so that it shares the configured
    handlers. You can optionally set a specific logging level for this logger.

    Args:
        name (str): The name of the logger (e.g., __name__).
        level (int, optional): The logging level for this logger. If None,
                               it inherits from its parent.

    Returns:
        MetricsLogger: The logger instance.
    """
    if name.startswith('src.'):
        name = name[len('src.'):]
    if not name.startswith(ROOT_LOGGER_NAME):
        name = f'{ROOT_LOGGER_NAME}.{name}'
    logger = logging.getLogger(name)
    if level is not None:
        logger.setLevel(level)
    return logger
