# core/data_loader.py
"""
Config loading: read the JSON document, fill schema defaults, apply CLI
overrides, then validate structure (jsonschema) and semantics (validators).
"""

import copy
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, Optional, Union

import orjson
from jsonschema import Draft202012Validator

from app.core.error_handling import ValidationError
from app.core.validators import validate_config
from config.schema import CONFIG_SCHEMA, schema_defaults

logger = logging.getLogger(__name__)


def _merge(base: dict, update: dict) -> dict:
    merged = copy.deepcopy(base)
    for key, value in update.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def parse_assignment(assignment: str) -> tuple:
    """'bath.n_states=32' -> (['bath', 'n_states'], 32). Values are JSON, else strings."""
    if "=" not in assignment:
        raise ValidationError(f"override '{assignment}' must look like dotted.key=value")
    key, raw = assignment.split("=", 1)
    path = [part for part in key.strip().split(".") if part]
    if not path:
        raise ValidationError(f"override '{assignment}' has an empty key")
    try:
        value = orjson.loads(raw)
    except orjson.JSONDecodeError:
        value = raw
    return path, value


def apply_override(config: dict, path: Iterable[str], value: Any) -> dict:
    path = list(path)
    node = config
    for part in path[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ValidationError(f"cannot set '{'.'.join(path)}': '{part}' is not an object")
    node[path[-1]] = value
    return config


def read_config_file(path: Union[str, Path]) -> dict:
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"config file not found: {path}")
    try:
        data = orjson.loads(path.read_bytes())
    except orjson.JSONDecodeError as e:
        raise ValidationError(f"{path} is not valid JSON: {e}") from e
    if not isinstance(data, dict):
        raise ValidationError(f"{path} must hold a JSON object")
    return data


def resolve_config(document: Optional[dict] = None,
                   overrides: Optional[Dict[str, Any]] = None,
                   assignments: Iterable[str] = ()) -> dict:
    """
    defaults <- document <- overrides (top-level keys) <- assignments
    (dotted.key=value), then validate. Returns the fully resolved dict.
    """
    config = _merge(schema_defaults(), document or {})
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if isinstance(value, dict) and isinstance(config.get(key), dict):
            config[key] = _merge(config[key], value)
        else:
            config[key] = value
    for assignment in assignments:
        apply_override(config, *parse_assignment(assignment))

    errors = sorted(Draft202012Validator(CONFIG_SCHEMA).iter_errors(config), key=lambda e: list(e.path))
    if errors:
        messages = [f"{'.'.join(str(p) for p in e.path) or '<root>'}: {e.message}" for e in errors]
        raise ValidationError("invalid config:\n  " + "\n  ".join(messages))

    problems = validate_config(config)
    if problems:
        raise ValidationError("invalid config:\n  " + "\n  ".join(problems))

    logger.debug(f"Resolved config: {config}")
    return config


def load_config(path: Optional[Union[str, Path]] = None,
                overrides: Optional[Dict[str, Any]] = None,
                assignments: Iterable[str] = ()) -> dict:
    document = read_config_file(path) if path is not None else {}
    return resolve_config(document, overrides, assignments)
