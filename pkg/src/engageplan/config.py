"""Typed construction of config dataclasses from parsed JSON.

Errors carry the dotted path of the offending field so a command-line user
can find it in their file.
"""

from __future__ import annotations

from dataclasses import MISSING, fields
from typing import Callable, Mapping


class ConfigError(ValueError):
    """Invalid configuration; ``field`` is the dotted path."""

    def __init__(self, field_path: str, message: str):
        super().__init__(f"{field_path}: {message}")
        self.field = field_path
        self.message = message


def check_type(value, default, path: str):
    """Coerce ``value`` to the type of ``default`` or raise; bools are never numbers."""
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(path, f"expected true/false, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(path, f"expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(path, f"expected a number, got {value!r}")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(path, f"expected a string, got {value!r}")
        return value
    if isinstance(default, tuple):
        if not isinstance(value, list):
            raise ConfigError(path, f"expected a list, got {value!r}")
        if default:
            return tuple(check_type(v, default[0], f"{path}[{i}]") for i, v in enumerate(value))
        return tuple(value)
    return value


def _default_of(f):
    if f.default is not MISSING:
        return f.default
    if f.default_factory is not MISSING:
        return f.default_factory()
    return None


def build_dataclass(cls, data, path: str, special: Mapping[str, Callable] | None = None):
    """``cls(**data)`` with unknown-field, type and validation errors mapped to ConfigError."""
    if not isinstance(data, Mapping):
        raise ConfigError(path, f"expected an object, got {type(data).__name__}")
    special = special or {}
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"{path}.{unknown[0]}", "unknown field")
    kwargs = {}
    for name, value in data.items():
        p = f"{path}.{name}"
        if name in special:
            kwargs[name] = special[name](value, p)
        else:
            kwargs[name] = check_type(value, _default_of(known[name]), p)
    try:
        return cls(**kwargs)
    except ConfigError as exc:
        raise ConfigError(f"{path}.{exc.field}", exc.message) from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(path, str(exc)) from None
