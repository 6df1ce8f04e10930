"""
overwatch.py

Utility for creating a centralized/standardized Python logger, with the Mercury format, at the appropriate logging
level. Every module nests its logger under the root `qcfe` logger so that formatting is inherited.
"""
import logging
from pathlib import Path
from typing import Optional


# Constants - for Formatting
LOG_FORMAT = "|=>> %(asctime)s - %(name)s - %(levelname)s :: %(message)s"
DATE_FORMAT = "%m/%d [%H:%M:%S]"


def get_overwatch(path: Optional[Path], level: int) -> logging.Logger:
    """
    Initialize logging.Logger with the appropriate name, console, and file handlers.

    :param path: Path for writing the log file (usually `<run_dir>/<run_id>.log`); None logs to console only.
    :param level: Default logging level --> should usually be INFO (inherited from the pipeline config).

    :return: Default "qcfe" root logger object :: logging.Logger
    """
    # Create Root Logger w/ Base Formatting
    logging.basicConfig(level=level, format=LOG_FORMAT, datefmt=DATE_FORMAT)

    # Create Default Logger & add File Handler
    logger = logging.getLogger()
    logger.setLevel(level)

    if path is not None:
        # Create File Handler --> Set mode to "a" to append to logs (ok, since each run will be uniquely named)
        file_handler = logging.FileHandler(path, mode="a")
        file_handler.setFormatter(logging.Formatter(LOG_FORMAT, datefmt=DATE_FORMAT))
        logger.addHandler(file_handler)

    return logging.getLogger("qcfe")
