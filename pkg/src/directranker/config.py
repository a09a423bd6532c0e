"""Flat ``key = value`` configuration files.

Lines starting with ``#`` (and trailing ``# ...``) are comments. Lists are
comma separated; grid files separate candidate values with ``|``.
"""
from __future__ import annotations

import dataclasses
from pathlib import Path


class ConfigError(ValueError):
    pass


def parse_kv(text: str) -> dict[str, str]:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value.strip()
    return out


def read_kv(path) -> dict[str, str]:
    return parse_kv(Path(path).read_text())


def _coerce(raw: str, default):
    raw = raw.strip()
    if isinstance(default, bool):
        if raw.lower() in ("1", "true", "yes"):
            return True
        if raw.lower() in ("0", "false", "no"):
            return False
        raise ConfigError(f"not a boolean: {raw!r}")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    if isinstance(default, (list, tuple)):
        items = [t for t in raw.strip("[]()").replace(" ", "").split(",") if t]
        elem = default[0] if default else 0
        vals = [type(elem)(t) for t in items]
        return type(default)(vals)
    return raw


def _defaults(cls):
    inst = cls()
    return {f.name: getattr(inst, f.name) for f in dataclasses.fields(cls)}


def coerce_value(cls, key, raw):
    defaults = _defaults(cls)
    if key not in defaults:
        raise ConfigError(f"{cls.__name__} has no field {key!r}")
    try:
        return _coerce(raw, defaults[key])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for {key}: {raw!r} ({exc})") from None


def build(cls, values: dict[str, str], **fixed):
    """Instantiate dataclass ``cls`` from string values (unknown keys are errors)."""
    kwargs = {k: coerce_value(cls, k, v) for k, v in values.items()}
    kwargs.update(fixed)
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def split_keys(values: dict[str, str], *classes):
    """Route keys to the first dataclass in ``classes`` that declares them."""
    parts = [dict() for _ in classes]
    names = [{f.name for f in dataclasses.fields(c)} for c in classes]
    for key, val in values.items():
        for part, known in zip(parts, names):
            if key in known:
                part[key] = val
                break
        else:
            raise ConfigError(f"unknown configuration key {key!r}")
    return parts


def parse_grid(values: dict[str, str], cls) -> dict[str, list]:
    """``hidden_sizes = 64 | 128,64`` -> ``{'hidden_sizes': [[64], [128, 64]]}``."""
    return {k: [coerce_value(cls, k, c) for c in v.split("|")] for k, v in values.items()}


def dump_kv(obj) -> str:
    lines = []
    for f in dataclasses.fields(obj):
        v = getattr(obj, f.name)
        if isinstance(v, (list, tuple)):
            v = ",".join(str(x) for x in v)
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"
