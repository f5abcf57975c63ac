# eitshape/logging_setup.py
import logging
import os
from typing import List, Optional

from .config import Config


def configure_logging(level: Optional[str] = None, log_file: Optional[str] = None,
                      quiet: bool = False) -> None:
    """Wire console and optional file handlers for the CLI"""
    level_name = (level or Config.LOG_LEVEL).upper()
    if quiet:
        level_name = 'WARNING'

    handlers: List[logging.Handler] = [logging.StreamHandler()]
    path = log_file if log_file is not None else Config.LOG_FILE
    if path:
        directory = os.path.dirname(path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        handlers.append(logging.FileHandler(path))

    logging.basicConfig(
        level=getattr(logging, level_name, logging.INFO),
        format=Config.LOG_FORMAT,
        handlers=handlers,
        force=True,
    )
