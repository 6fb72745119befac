"""Logging configuration for the fiber-microsphere pipeline."""

import logging
import os
from pathlib import Path
from typing import Dict, Optional

LOG_DIR_ENV = "FIBERSPHERE_LOG_DIR"

_SEVERITY_LEVELS = {
    'debug': logging.DEBUG,
    'info': logging.INFO,
    'warning': logging.WARNING,
    'error': logging.ERROR,
    'critical': logging.CRITICAL,
}

_COMPONENT_LOGGERS = (
    'CoupledMode',
    'Polarization',
    'PhotonSimulator',
    'Tomography',
    'Fitting',
    'Pipeline',
    'Cli',
    'FlaskApp',
)


def resolve_log_dir(log_dir: Optional[Path] = None) -> Path:
    """Explicit argument, then FIBERSPHERE_LOG_DIR, then ./logs next to the package."""
    if log_dir is not None:
        return Path(log_dir)
    from_env = os.getenv(LOG_DIR_ENV, "").strip()
    if from_env:
        return Path(from_env)
    return Path(__file__).resolve().parent.parent.parent / "logs"


def setup_logging(log_dir: Optional[Path] = None, quiet: bool = False) -> Dict[str, Path]:
    """Configure logging to write to separate log files by severity.

    Each severity file captures its level and everything above it. The
    Tomography logger writes only to its own file and does not propagate.

    Args:
        log_dir: Directory for the log files. Falls back to FIBERSPHERE_LOG_DIR,
                 then a 'logs' directory at the project root.
        quiet: Skip printing the log file locations.

    Returns:
        Dictionary mapping log levels to their file paths.
    """
    log_dir = resolve_log_dir(log_dir)
    log_dir.mkdir(parents=True, exist_ok=True)

    log_files = {name: log_dir / f"{name}.log" for name in _SEVERITY_LEVELS}

    handlers = []
    for name, level in _SEVERITY_LEVELS.items():
        handler = logging.FileHandler(log_files[name], mode='w')
        handler.setLevel(level)
        handlers.append(handler)

    logging.basicConfig(
        level=logging.DEBUG,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=handlers,
        force=True,
    )

    for name in _COMPONENT_LOGGERS:
        logging.getLogger(name).setLevel(logging.DEBUG)

    tomography_log_file = log_dir / "tomography.log"
    tomography_logger = logging.getLogger('Tomography')

    # Repeated setup_logging() calls must not stack handlers
    for handler in tomography_logger.handlers[:]:
        tomography_logger.removeHandler(handler)
        handler.close()

    tomography_handler = logging.FileHandler(tomography_log_file, mode='w')
    tomography_handler.setLevel(logging.DEBUG)
    tomography_handler.setFormatter(
        logging.Formatter('%(asctime)s - %(levelname)s - %(message)s')
    )
    tomography_logger.addHandler(tomography_handler)
    tomography_logger.propagate = False

    if not quiet:
        print("Logging to separate files by severity:")
        for level, file_path in log_files.items():
            print(f"  {level.upper()}: {file_path}")
        print(f"  Tomography: {tomography_log_file}")

    log_files['tomography'] = tomography_log_file
    return log_files
