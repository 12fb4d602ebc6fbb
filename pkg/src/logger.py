#!/usr/bin/env python3
"""
Structured JSON logging for the DAG translation toolkit.

Every command logs to ``<logs_dir>/dat-<date>.log`` through one rotating file
handler on the ``DagTranslator`` logger; modules log through children of it
(``get_logger("training")``) and attach fields with
``extra={'extra_data': {...}}``.
"""

import datetime
import json
import logging
from logging.handlers import RotatingFileHandler
from pathlib import Path
from typing import Any, Optional

import numpy as np
import torch

LOGGER_NAME = "DagTranslator"
MAX_LOG_BYTES = 10 * 1024 * 1024
LOG_BACKUPS = 5


def _jsonable(value: Any) -> Any:
    if isinstance(value, torch.Tensor):
        return value.item() if value.numel() == 1 else value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    return str(value)


class JsonFormatter(logging.Formatter):
    """One JSON object per line; ``extra_data`` fields are merged at top level."""

    def format(self, record):
        entry = {
            "timestamp": self.formatTime(record, self.datefmt),
            "level": record.levelname,
            "name": record.name,
            "message": record.getMessage(),
        }
        entry.update(getattr(record, "extra_data", {}))
        if record.exc_info:
            entry["exc_info"] = self.formatException(record.exc_info)
        return json.dumps(entry, default=_jsonable)


def get_logger(module: str) -> logging.Logger:
    """Child logger of the application logger, e.g. ``DagTranslator.training``."""
    return logging.getLogger(f"{LOGGER_NAME}.{module}")


def log_file_for(logs_dir: Path) -> Path:
    return logs_dir / f"dat-{datetime.date.today()}.log"


def setup_logging(logs_dir: Optional[Path] = None, level: str = "INFO") -> logging.Logger:
    """
    Point the application logger at ``logs_dir``.

    Calling it again with another directory moves the file handler there, so
    several commands run in one process each log next to their own outputs.

    Args:
        logs_dir: Directory to store log files. If None, uses "./logs"
        level: Threshold level name (DEBUG, INFO, WARNING, ERROR)

    Returns:
        Configured logger instance
    """
    log_file = log_file_for(logs_dir or Path("logs")).resolve()
    log_file.parent.mkdir(parents=True, exist_ok=True)

    logger = logging.getLogger(LOGGER_NAME)
    logger.setLevel(getattr(logging, level.upper(), logging.INFO))
    logger.propagate = False

    for handler in list(logger.handlers):
        if isinstance(handler, RotatingFileHandler) and Path(handler.baseFilename) == log_file:
            return logger
        logger.removeHandler(handler)
        handler.close()

    handler = RotatingFileHandler(log_file, maxBytes=MAX_LOG_BYTES, backupCount=LOG_BACKUPS, encoding="utf-8")
    handler.setFormatter(JsonFormatter())
    logger.addHandler(handler)
    return logger
