"""
Logging configuration.
"""

import logging
import sys
from pathlib import Path

from pythonjsonlogger import jsonlogger

_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


def setup_logger(name: str, log_file: str = None, level: int = logging.INFO, json_format: bool = False) -> logging.Logger:
    """
    Configure logger with console and file handlers.

    Args:
        name: Logger name
        log_file: Optional log file path (always written at DEBUG)
        level: Console level
        json_format: Write the log file as one JSON object per line

    Returns:
        Configured logger instance
    """
    logger = logging.getLogger(name)
    logger.setLevel(logging.DEBUG)
    # Repeated calls (tests, CLI re-entry) must not stack handlers.
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
        handler.close()

    # Console handler
    console_handler = logging.StreamHandler(sys.stdout)
    console_handler.setLevel(level)
    console_handler.setFormatter(logging.Formatter(_FORMAT))
    logger.addHandler(console_handler)

    # File handler (if specified)
    if log_file:
        log_path = Path(log_file)
        log_path.parent.mkdir(parents=True, exist_ok=True)

        file_handler = logging.FileHandler(log_file, encoding="utf-8")
        file_handler.setLevel(logging.DEBUG)
        if json_format:
            file_handler.setFormatter(jsonlogger.JsonFormatter(_FORMAT))
        else:
            file_handler.setFormatter(logging.Formatter(_FORMAT))
        logger.addHandler(file_handler)

    return logger
