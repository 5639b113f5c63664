"""
Loading and parsing of the JSON documents the engine consumes

pydantic errors never leave this module: they become ConfigValidationError
with one message per failed invariant.
"""

import json
from pathlib import Path
from typing import Any, List, Optional, Type, TypeVar

from pydantic import BaseModel, ValidationError

from app.core.errors import ConfigParseError, ConfigValidationError
from app.core.models import IntersectionConfig, QueueState, SignalPlan
from app.utils import PathLike

ModelT = TypeVar("ModelT", bound=BaseModel)


def describe_validation_error(error: ValidationError) -> List[str]:
    """Flatten a pydantic ValidationError into 'field: message' strings."""
    problems = []
    for err in error.errors():
        loc = ".".join(str(part) for part in err.get("loc", ()))
        msg = err.get("msg", "invalid value")
        if msg.startswith("Value error, "):
            msg = msg[len("Value error, "):]
        problems.append(f"{loc}: {msg}" if loc else msg)
    return problems


def read_json(path: PathLike) -> Any:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigParseError(f"{path}: cannot read file ({e.strerror or e})") from e
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigParseError(
            f"{path}: malformed JSON at line {e.lineno} column {e.colno}: {e.msg}"
        ) from e


def parse_model(data: Any, model_cls: Type[ModelT], source: str) -> ModelT:
    try:
        return model_cls.model_validate(data)
    except ValidationError as e:
        raise ConfigValidationError(source, describe_validation_error(e)) from e


def load_model(path: PathLike, model_cls: Type[ModelT]) -> ModelT:
    return parse_model(read_json(path), model_cls, str(path))


def load_intersection_config(path: PathLike) -> IntersectionConfig:
    """
    Load and validate an intersection config file

    Raises:
        ConfigParseError: file missing or not JSON
        ConfigValidationError: an invariant failed (named in the message)
    """
    return load_model(path, IntersectionConfig)


def load_queue_state(path: PathLike, cfg: Optional[IntersectionConfig] = None) -> QueueState:
    """Load a QueueState file, checking its width against `cfg` when given."""
    queue = load_model(path, QueueState)
    if cfg is not None and queue.num_links != cfg.num_links:
        raise ConfigValidationError(
            str(path), [f"queue has {queue.num_links} links, intersection has {cfg.num_links}"]
        )
    return queue


def load_signal_plan(path: PathLike) -> SignalPlan:
    return load_model(path, SignalPlan)
