"""Logging configuration.

This module sets up application logging with console and file handlers,
and the per-step loss log of training runs.
"""

import csv
import logging
import os
import sys
from typing import Dict, List, Optional

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


def setup_logging(log_file: Optional[str], log_level: str = "INFO"):
    """Setup logging configuration.

    Args:
        log_file: Path to log file, or None/empty for console only
        log_level: Logging level (DEBUG, INFO, WARNING, ERROR)
    """
    root_logger = logging.getLogger()
    root_logger.setLevel(logging.DEBUG)
    for handler in list(root_logger.handlers):
        if getattr(handler, "_texture_refine", False):
            root_logger.removeHandler(handler)
            handler.close()

    # Console handler
    console_handler = logging.StreamHandler(sys.stdout)
    console_handler.setLevel(getattr(logging, log_level.upper()))
    console_handler.setFormatter(logging.Formatter(LOG_FORMAT))
    console_handler._texture_refine = True
    root_logger.addHandler(console_handler)

    # File handler
    if log_file:
        directory = os.path.dirname(os.path.abspath(log_file))
        os.makedirs(directory, exist_ok=True)
        file_handler = logging.FileHandler(log_file, encoding='utf-8')
        file_handler.setLevel(getattr(logging, log_level.upper()))
        file_handler.setFormatter(logging.Formatter(LOG_FORMAT))
        file_handler._texture_refine = True
        root_logger.addHandler(file_handler)

    # Suppress noisy libraries
    logging.getLogger('PIL').setLevel(logging.WARNING)


def setup_losses_logger(log_file: str) -> logging.Logger:
    """Setup dedicated logger for per-step loss summaries.

    Args:
        log_file: Path of the losses log

    Returns:
        Configured logger for loss lines
    """
    losses_logger = logging.getLogger('losses')
    losses_logger.setLevel(logging.INFO)

    for handler in list(losses_logger.handlers):
        losses_logger.removeHandler(handler)
        handler.close()

    file_handler = logging.FileHandler(log_file, encoding='utf-8')
    file_handler.setLevel(logging.INFO)
    file_handler.setFormatter(logging.Formatter(
        '%(asctime)s | %(message)s',
        datefmt='%Y-%m-%d %H:%M:%S'
    ))
    losses_logger.addHandler(file_handler)

    losses_logger.propagate = False
    return losses_logger


class LossLog:
    """CSV log with one row per training step: step, each term, total."""

    def __init__(self, path: str, terms: List[str], append: bool = False):
        self.path = path
        self.terms = list(terms)
        self.logger = logging.getLogger(__name__)
        exists = append and os.path.exists(path)
        self._file = open(path, 'a' if exists else 'w', newline='', encoding='utf-8')
        self._writer = csv.writer(self._file)
        if not exists:
            self._writer.writerow(["step"] + self.terms + ["total"])
            self._file.flush()

    def append(self, step: int, values: Dict[str, float]):
        row = [step] + [f"{values.get(t, 0.0):.8g}" for t in self.terms] + [f"{values['total']:.8g}"]
        self._writer.writerow(row)
        self._file.flush()

    def close(self):
        if not self._file.closed:
            self._file.close()
            self.logger.debug(f"Closed loss log {self.path}")


def read_loss_log(path: str) -> List[Dict[str, float]]:
    with open(path, 'r', newline='', encoding='utf-8') as f:
        return [{k: float(v) for k, v in row.items()} for row in csv.DictReader(f)]
