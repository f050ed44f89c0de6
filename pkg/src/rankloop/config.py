"""Config file loading: TOML or JSON, chosen by extension."""

from __future__ import annotations

import json
from pathlib import Path

try:
    import tomllib  # Python 3.11+
except ModuleNotFoundError:  # pragma: no cover - depends on interpreter
    import tomli as tomllib


def load_config_file(path: str | Path) -> dict:
    path = Path(path)
    if path.suffix.lower() == ".toml":
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    if path.suffix.lower() == ".json":
        return json.loads(path.read_text())
    raise ValueError(f"config must be .toml or .json, got {path.suffix!r}")


def deep_merge(base: dict, overrides: dict) -> dict:
    """Nested dict merge; override values win, dicts merge recursively."""
    out = dict(base)
    for key, val in overrides.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = deep_merge(out[key], val)
        elif val is not None:
            out[key] = val
    return out
