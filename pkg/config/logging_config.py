"""
Logging configuration for the ViG age estimator.
Logs always go to stderr (or a file); stdout is reserved for the command
output that scripts parse: epoch lines, ``mae=``, ``age=`` and the
gradient-check report.
"""

import json
import logging
import sys
from datetime import datetime, timezone
from logging.handlers import RotatingFileHandler
from typing import Any, Optional, TextIO

import numpy as np


# Domain fields passed through ``extra=`` that the JSON formatter keeps
EXTRA_FIELDS = ("epoch", "step", "repeat", "parameter", "sample")

TEXT_FORMAT = "%(asctime)s [%(levelname)s] %(name)s:%(funcName)s:%(lineno)d - %(message)s"
DATE_FORMAT = "%Y-%m-%d %H:%M:%S"


def _json_default(value: Any) -> Any:
    """Make numpy scalars and arrays JSON-serializable."""
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    return str(value)


class JSONFormatter(logging.Formatter):
    """
    One JSON object per line, for collecting training runs.
    Domain extras (epoch, step, repeat, parameter, sample) are copied over
    when a call site passes them.
    """

    def format(self, record: logging.LogRecord) -> str:
        log_data = {
            "timestamp": datetime.fromtimestamp(record.created, tz=timezone.utc).isoformat(),
            "level": record.levelname,
            "logger": record.name,
            "message": record.getMessage(),
            "module": record.module,
            "function": record.funcName,
            "line": record.lineno,
        }
        if record.exc_info:
            log_data["exception"] = self.formatException(record.exc_info)

        for field in EXTRA_FIELDS:
            if hasattr(record, field):
                log_data[field] = getattr(record, field)

        return json.dumps(log_data, default=_json_default)


class ColoredFormatter(logging.Formatter):
    """Console formatter that colors the level name."""

    COLORS = {
        "DEBUG": "\033[36m",     # Cyan
        "INFO": "\033[32m",      # Green
        "WARNING": "\033[33m",   # Yellow
        "ERROR": "\033[31m",     # Red
        "CRITICAL": "\033[35m",  # Magenta
    }
    RESET = "\033[0m"

    def format(self, record: logging.LogRecord) -> str:
        color = self.COLORS.get(record.levelname, self.RESET)
        # copy so other handlers see the plain level name
        record = logging.makeLogRecord(record.__dict__)
        record.levelname = f"{color}{record.levelname}{self.RESET}"
        return super().format(record)


def console_formatter(stream: TextIO, use_json: bool) -> logging.Formatter:
    """JSON if requested, colors only on a terminal, plain text otherwise."""
    if use_json:
        return JSONFormatter()
    isatty = getattr(stream, "isatty", None)
    if callable(isatty) and isatty():
        return ColoredFormatter(fmt=TEXT_FORMAT, datefmt=DATE_FORMAT)
    return logging.Formatter(fmt=TEXT_FORMAT, datefmt=DATE_FORMAT)


def setup_logging(
    level: str = "INFO",
    use_json: bool = False,
    log_file: Optional[str] = None,
    stream: Optional[TextIO] = None,
) -> None:
    """
    Configure the root logger for one CLI invocation.

    Args:
        level: Log level (DEBUG, INFO, WARNING, ERROR, CRITICAL)
        use_json: Emit JSON lines on the console instead of text
        log_file: Optional rotating file, always JSON at DEBUG level
        stream: Console stream, stderr when omitted
    """
    numeric_level = getattr(logging, level.upper())
    root_logger = logging.getLogger()
    root_logger.setLevel(logging.DEBUG if log_file else numeric_level)

    for handler in root_logger.handlers[:]:
        root_logger.removeHandler(handler)

    console = stream or sys.stderr
    console_handler = logging.StreamHandler(console)
    console_handler.setLevel(numeric_level)
    console_handler.setFormatter(console_formatter(console, use_json))
    root_logger.addHandler(console_handler)

    if log_file:
        file_handler = RotatingFileHandler(log_file, maxBytes=10 * 1024 * 1024, backupCount=5)
        file_handler.setLevel(logging.DEBUG)
        file_handler.setFormatter(JSONFormatter())
        root_logger.addHandler(file_handler)

    logging.debug(f"Logging configured: level={level}, json={use_json}, file={log_file or 'disabled'}")


def get_logger(name: str) -> logging.Logger:
    """Module logger; call as ``get_logger(__name__)``."""
    return logging.getLogger(name)
