"""
Logging configuration for dqpe.

The console shows run milestones at the requested level; the run directory's log file
keeps everything down to DEBUG (per-iteration numerics) so a finished run can be
inspected without repeating it. numpy RuntimeWarnings are routed into the same
handlers.
"""

import logging
import sys
from pathlib import Path
from typing import Optional, Union
from logging.handlers import RotatingFileHandler


LOG_FORMAT = "%(asctime)s [%(levelname)s] [%(name)s] %(message)s"
DATE_FORMAT = "%Y-%m-%d %H:%M:%S"
LOG_FILE_NAME = "dqpe.log"

LOGGER_NAMES = [
    "dqpe.app",
    "dqpe.config",
    "dqpe.artifacts",
    "dqpe.studies",
    "dqpe.core.spectral",
    "dqpe.core.qpe",
    "dqpe.core.sampling",
    "dqpe.core.estimator",
    "dqpe.core.statistics",
    "dqpe.core.gradients",
    "dqpe.core.pipeline",
    "dqpe.core.optimizer",
    "dqpe.chem.geometry",
    "dqpe.chem.integrals",
    "dqpe.chem.scf",
    "dqpe.chem.hamiltonian",
    "dqpe.chem.fcidump",
    "dqpe.chem.system",
]

# warnings.warn / numpy RuntimeWarning records end up here once captured
WARNINGS_LOGGER = "py.warnings"


def _reset(logger: logging.Logger) -> None:
    for handler in logger.handlers:
        handler.close()
    logger.handlers.clear()


def setup_logging(
    level: str = "INFO",
    log_file: Optional[Union[str, Path]] = None,
    console: bool = True,
    file_level: str = "DEBUG",
) -> Optional[Path]:
    """
    Configure logging for a dqpe run.

    Args:
        level: Console log level (DEBUG, INFO, WARNING, ERROR, CRITICAL)
        log_file: Path to log file (optional, creates rotating log)
        console: Whether to log to stderr (stdout is reserved for JSON results)
        file_level: Log file level, DEBUG by default

    Returns:
        The log file path, or None when no file is written
    """
    console_level = getattr(logging, level.upper(), logging.INFO)
    disk_level = getattr(logging, file_level.upper(), logging.DEBUG)
    floor = min(console_level, disk_level) if log_file else console_level

    root_logger = logging.getLogger("dqpe")
    root_logger.setLevel(floor)
    warnings_logger = logging.getLogger(WARNINGS_LOGGER)
    _reset(root_logger)
    _reset(warnings_logger)

    formatter = logging.Formatter(LOG_FORMAT, DATE_FORMAT)
    handlers: list[logging.Handler] = []

    if console:
        console_handler = logging.StreamHandler(sys.stderr)
        console_handler.setLevel(console_level)
        console_handler.setFormatter(formatter)
        handlers.append(console_handler)

    if log_file:
        log_file = Path(log_file)
        log_file.parent.mkdir(parents=True, exist_ok=True)
        file_handler = RotatingFileHandler(
            log_file, maxBytes=10 * 1024 * 1024, backupCount=5, encoding="utf-8"  # 10MB
        )
        file_handler.setLevel(disk_level)
        file_handler.setFormatter(formatter)
        handlers.append(file_handler)

    for handler in handlers:
        root_logger.addHandler(handler)
        warnings_logger.addHandler(handler)
    warnings_logger.propagate = False
    logging.captureWarnings(True)

    for logger_name in LOGGER_NAMES:
        logging.getLogger(logger_name).setLevel(floor)

    return log_file


def get_logger(name: str) -> logging.Logger:
    """
    Get a logger for a specific component.

    Args:
        name: Component name (e.g., 'dqpe.core.qpe' or just 'core.qpe')

    Returns:
        Logger instance
    """
    if not name.startswith("dqpe."):
        name = f"dqpe.{name}"
    return logging.getLogger(name)


def get_default_log_file(output_dir: Union[str, Path]) -> Path:
    """Log file of a run directory."""
    return Path(output_dir) / LOG_FILE_NAME
