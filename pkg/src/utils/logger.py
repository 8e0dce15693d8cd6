"""Logging configuration for the pipeline.

Rollout workers run in separate processes; only the main process owns the
rotating file, workers tag their console lines with the process name.
"""

import logging
import multiprocessing
import sys
from logging.handlers import RotatingFileHandler

from src.config.settings import LOG_DIR, LOG_LEVEL

LOG_FILE = "cirl.log"
MAIN_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
WORKER_FORMAT = "%(asctime)s - %(processName)s - %(name)s - %(levelname)s - %(message)s"


def in_worker_process() -> bool:
    return multiprocessing.parent_process() is not None


def setup_logger(name: str) -> logging.Logger:
    """Configure logging with console output and, in the main process, a rotating file.

    Args:
        name: Logger name (usually __name__)

    Returns:
        Configured logger instance
    """
    logger = logging.getLogger(name)
    logger.setLevel(logging.DEBUG)

    # Prevent duplicate handlers if called multiple times
    if logger.handlers:
        return logger

    worker = in_worker_process()
    formatter = logging.Formatter(WORKER_FORMAT if worker else MAIN_FORMAT, datefmt="%Y-%m-%d %H:%M:%S")

    console_handler = logging.StreamHandler(sys.stdout)
    console_handler.setLevel(getattr(logging, LOG_LEVEL, logging.INFO))
    console_handler.setFormatter(formatter)
    logger.addHandler(console_handler)

    if not worker:
        # 10MB per file, 5 backups
        LOG_DIR.mkdir(parents=True, exist_ok=True)
        file_handler = RotatingFileHandler(LOG_DIR / LOG_FILE, maxBytes=10_000_000, backupCount=5)
        file_handler.setLevel(logging.DEBUG)
        file_handler.setFormatter(formatter)
        logger.addHandler(file_handler)

    logger.propagate = False
    return logger
