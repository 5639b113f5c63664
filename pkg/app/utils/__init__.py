"""
Utility functions for the signal engine
Includes logging setup, JSON/JSONL/CSV writers and the monotonic clock
"""

import json
import logging
import time
from pathlib import Path
from typing import Any, Dict, Iterable, Iterator, List, Optional, Union

import pandas as pd

PathLike = Union[str, Path]

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
LOG_DATE_FORMAT = '%Y-%m-%d %H:%M:%S'


def setup_logging(
    name: str = "signal_engine",
    level: Optional[Union[int, str]] = None,
    log_file: Optional[PathLike] = None
) -> logging.Logger:
    """
    Set up logging with a console handler and an optional file handler

    Args:
        name: Logger name
        level: Logging level (defaults to SIGNAL_LOG_LEVEL)
        log_file: Also write to this file when given

    Returns:
        Configured logger instance
    """
    if level is None:
        from app.utils.config_loader import Config
        level = Config().LOG_LEVEL

    logger = logging.getLogger(name)
    logger.setLevel(level)

    formatter = logging.Formatter(LOG_FORMAT, datefmt=LOG_DATE_FORMAT)

    # Avoid duplicate console handlers
    if not any(type(h) is logging.StreamHandler for h in logger.handlers):
        console_handler = logging.StreamHandler()
        console_handler.setFormatter(formatter)
        logger.addHandler(console_handler)

    if log_file is not None:
        log_path = Path(log_file).resolve()
        already = any(
            isinstance(h, logging.FileHandler) and Path(h.baseFilename) == log_path
            for h in logger.handlers
        )
        if not already:
            ensure_dir(log_path.parent)
            file_handler = logging.FileHandler(log_path, encoding='utf-8')
            file_handler.setFormatter(formatter)
            logger.addHandler(file_handler)

    return logger


def detach_file_handlers(logger: logging.Logger) -> None:
    """Close and remove every file handler of a logger."""
    for handler in list(logger.handlers):
        if isinstance(handler, logging.FileHandler):
            handler.close()
            logger.removeHandler(handler)


def ensure_dir(path: PathLike) -> Path:
    """Create a folder if it doesn't exist."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    return path


def monotonic_ms() -> float:
    """Monotonic clock in milliseconds. Wall time only ever appears in logs."""
    return time.monotonic_ns() / 1_000_000


def save_to_json(data: Any, filepath: PathLike) -> str:
    """
    Save data to a JSON file with stable key order

    Args:
        data: JSON-serializable data
        filepath: Output file

    Returns:
        Full path to saved file
    """
    filepath = Path(filepath)
    ensure_dir(filepath.parent)
    with open(filepath, 'w', encoding='utf-8') as f:
        json.dump(data, f, indent=2, sort_keys=True, ensure_ascii=False)
        f.write('\n')
    return str(filepath)


def save_to_csv(data: Union[pd.DataFrame, List[Dict[str, Any]]], filepath: PathLike) -> str:
    """
    Save a DataFrame (or list of dicts) to CSV

    Args:
        data: Rows to save
        filepath: Output file

    Returns:
        Full path to saved file
    """
    filepath = Path(filepath)
    ensure_dir(filepath.parent)
    df = data if isinstance(data, pd.DataFrame) else pd.DataFrame(data)
    df.to_csv(filepath, index=False, encoding='utf-8', lineterminator='\n')
    return str(filepath)


def write_jsonl(lines: Iterable[str], filepath: PathLike, append: bool = False) -> str:
    """Write pre-serialized JSON documents one per line."""
    filepath = Path(filepath)
    ensure_dir(filepath.parent)
    with open(filepath, 'a' if append else 'w', encoding='utf-8') as f:
        for line in lines:
            f.write(line.rstrip('\n') + '\n')
    return str(filepath)


def read_jsonl(filepath: PathLike) -> Iterator[Dict[str, Any]]:
    """Yield one parsed document per non-blank line."""
    with open(filepath, 'r', encoding='utf-8') as f:
        for line in f:
            line = line.strip()
            if line:
                yield json.loads(line)


__all__ = [
    'setup_logging', 'detach_file_handlers', 'ensure_dir', 'monotonic_ms',
    'save_to_json', 'save_to_csv', 'write_jsonl', 'read_jsonl', 'PathLike'
]
