"""Tests for logger setup."""

import logging
from logging.handlers import RotatingFileHandler

from src.utils import logger as logger_module
from src.utils.logger import setup_logger


class TestSetupLogger:
    """Test handler configuration."""

    def test_main_process_handlers(self):
        """Test that the main process logs to console and file."""
        log = setup_logger("tests.logger.main")
        kinds = sorted(type(h).__name__ for h in log.handlers)
        assert kinds == ["RotatingFileHandler", "StreamHandler"]
        assert not log.propagate

    def test_no_duplicate_handlers(self):
        first = setup_logger("tests.logger.repeat")
        second = setup_logger("tests.logger.repeat")
        assert first is second
        assert len(second.handlers) == 2

    def test_console_level_from_settings(self):
        """Test that the console handler follows CIRL_LOG_LEVEL."""
        log = setup_logger("tests.logger.level")
        console = next(h for h in log.handlers if not isinstance(h, RotatingFileHandler))
        assert console.level == logging.WARNING

    def test_worker_skips_file(self, monkeypatch):
        """Test that worker processes only log to the console."""
        monkeypatch.setattr(logger_module, "in_worker_process", lambda: True)
        log = setup_logger("tests.logger.worker")
        assert [type(h).__name__ for h in log.handlers] == ["StreamHandler"]
        assert "processName" in log.handlers[0].formatter._fmt
