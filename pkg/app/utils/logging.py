"""Logging configuration for roadheat.

Everything logs under the ``app`` logger. Planner rollouts run on worker
threads, so records carry the thread name.
"""

from __future__ import annotations

import logging
import sys
from logging.handlers import RotatingFileHandler
from pathlib import Path

LOG_FORMAT = "%(asctime)s [%(levelname)s] %(name)s (%(threadName)s): %(message)s"
CONSOLE_FORMAT = "[%(levelname)s] %(name)s: %(message)s"


def _console_handlers(root: logging.Logger) -> list[logging.Handler]:
    return [
        h
        for h in root.handlers
        if isinstance(h, logging.StreamHandler) and not isinstance(h, logging.FileHandler)
    ]


def setup_logging(
    log_file: str | Path | None = "roadheat.log",
    level: int = logging.INFO,
    console: bool = False,
) -> None:
    """Attach a rotating file handler and/or a stderr handler to the ``app`` logger.

    Safe to call repeatedly: a handler kind that is already attached is not
    added again, so the CLI can add a console after ``main`` set up the file.
    """
    root = logging.getLogger("app")
    root.setLevel(min(level, root.level or level) if root.handlers else level)

    has_file = any(isinstance(h, RotatingFileHandler) for h in root.handlers)
    if log_file and not has_file:
        file_handler = RotatingFileHandler(
            log_file, maxBytes=10 * 1024 * 1024, backupCount=3, encoding="utf-8"
        )
        file_handler.setLevel(level)
        file_handler.setFormatter(logging.Formatter(LOG_FORMAT, datefmt="%Y-%m-%d %H:%M:%S"))
        root.addHandler(file_handler)

    if console and not _console_handlers(root):
        console_handler = logging.StreamHandler(sys.stderr)
        console_handler.setLevel(logging.WARNING)
        console_handler.setFormatter(logging.Formatter(CONSOLE_FORMAT))
        root.addHandler(console_handler)


def set_verbosity(count: int) -> int:
    """Map a ``-v`` count onto the console handlers: 0 warnings, 1 info, 2+ debug."""
    if count <= 0:
        level = logging.WARNING
    elif count == 1:
        level = logging.INFO
    else:
        level = logging.DEBUG

    root = logging.getLogger("app")
    root.setLevel(min(root.level or logging.WARNING, level))
    for handler in _console_handlers(root):
        handler.setLevel(level)
    return level
