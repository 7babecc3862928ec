"""Logging configuration using Loguru."""

import sys
from pathlib import Path
from typing import Optional

from loguru import logger

from core.config import settings


def setup_logger(level: Optional[str] = None):
    """
    Configure Loguru with a stderr sink and an optional rotating file sink.

    Standard output is reserved for artifacts, so console diagnostics go to
    standard error.
    """
    level = (level or settings.SPECMINE_LOG).upper()

    logger.remove()

    logger.add(
        sys.stderr,
        format="<green>{time:YYYY-MM-DD HH:mm:ss}</green> | <level>{level: <8}</level> | <cyan>{name}</cyan>:<cyan>{function}</cyan> - <level>{message}</level>",
        level=level,
        colorize=True
    )

    if settings.SPECMINE_LOG_FILE:
        log_path = Path(settings.SPECMINE_LOG_FILE)
        log_path.parent.mkdir(parents=True, exist_ok=True)

        logger.add(
            settings.SPECMINE_LOG_FILE,
            format="{time:YYYY-MM-DD HH:mm:ss} | {level: <8} | {name}:{function}:{line} - {message}",
            level=level,
            rotation=settings.SPECMINE_LOG_ROTATION,
            retention=settings.SPECMINE_LOG_RETENTION,
            compression="zip",
            encoding="utf-8"
        )

    logger.debug(f"Logger initialized at level {level}")
    return logger


# Initialize logger
log = setup_logger()
