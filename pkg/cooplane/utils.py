import logging
import os
from typing import Any, Dict, Iterable, Optional, Type, TypeVar

from pydantic import BaseModel, ValidationError
from rich.logging import RichHandler

from .errors import InputError
from .ui.display import console

LOG_LEVEL_ENV = "COOPLANE_LOG_LEVEL"

M = TypeVar("M", bound=BaseModel)


def setup_logging(level: Optional[str] = None) -> None:
    """Route library logging through a RichHandler on the shared console"""
    level = (level or os.environ.get(LOG_LEVEL_ENV) or "WARNING").upper()
    if not isinstance(logging.getLevelName(level), int):
        raise InputError(f"Unknown log level: {level}")
    root = logging.getLogger("cooplane")
    for handler in list(root.handlers):
        root.removeHandler(handler)
    handler = RichHandler(console=console, show_path=False, rich_tracebacks=True, markup=False)
    handler.setFormatter(logging.Formatter("%(message)s", datefmt="[%X]"))
    root.addHandler(handler)
    root.setLevel(level)
    root.propagate = False


def _coerce(value: str) -> Any:
    try:
        return int(value)
    except ValueError:
        try:
            return float(value)
        except ValueError:
            pass
    lowered = value.lower()
    if lowered in ("true", "false"):
        return lowered == "true"
    return value


def parse_overrides(raw_args: Iterable[str]) -> Dict[str, Any]:
    """Parse key=value arguments into a dictionary, trying int, then float, then string"""
    parsed = {}
    for arg in raw_args:
        if "=" not in arg:
            raise InputError(f"Invalid argument format: {arg}. Use key=value, e.g. mpc.horizon=15")
        key, value = arg.split("=", 1)
        if not key:
            raise InputError(f"Invalid argument format: {arg}")
        if "," in value:
            parsed[key] = [_coerce(item) for item in value.split(",")]
        else:
            parsed[key] = _coerce(value)
    return parsed


def apply_overrides(model: M, overrides: Dict[str, Any]) -> M:
    """
    Apply dotted-key overrides such as ``mpc.horizon=15`` to a pydantic model and
    re-validate the result.
    """
    if not overrides:
        return model
    data = model.model_dump()
    for key, value in overrides.items():
        node = data
        parts = key.split(".")
        for part in parts[:-1]:
            if not isinstance(node.get(part), dict):
                raise InputError(f"Unknown setting: {key}")
            node = node[part]
        if parts[-1] not in node:
            raise InputError(f"Unknown setting: {key}")
        node[parts[-1]] = value
    cls: Type[M] = type(model)
    try:
        return cls.model_validate(data)
    except ValidationError as e:
        raise InputError(f"Invalid override: {e}")
