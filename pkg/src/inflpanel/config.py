"""Run configuration: a versioned TOML file plus environment and flag overrides.

Precedence is file < ``INFLPANEL_*`` environment variables < command-line
flags. An environment key uses ``__`` to descend into tables, e.g.
``INFLPANEL_MODEL__LAG_MAX=3`` sets ``model.lag_max``.
"""

from __future__ import annotations

import copy
import os
from pathlib import Path
from typing import Any, Mapping

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

SCHEMA_VERSION = 1
ENV_PREFIX = "INFLPANEL_"

DEFAULTS: dict[str, Any] = {
    "schema_version": SCHEMA_VERSION,
    "out": "out",
    "threads": 1,
    "data": {"panel": None, "institutions": None, "start": 2013, "end": 2024},
    "describe": {
        "columns": None,
        "scatter": None,
        "histogram_column": None,
        "histogram_bin_width": 1.0,
        "volatility": [],
    },
    "model": {
        "dependent": "inflation",
        "endogenous_controls": ["gdp_growth"],
        "exogenous_controls": ["import_prices", "energy_prices"],
        "interactions": [[], ["wri"], ["err"], ["wri", "err"]],
        "estimators": ["fe", "gmm"],
        "time_effects": True,
        "lag_min": 2,
        "lag_max": 4,
        "collapse": True,
        "steps": 2,
        "windmeijer": True,
        "labels": {},
    },
    "simulate": {
        "reps": 500,
        "significance_level": 0.05,
        "variants": [],
    },
    "dgp": {},
}


class ConfigError(ValueError):
    pass


def _merge(base: dict, update: Mapping) -> dict:
    out = copy.deepcopy(base)
    for key, value in update.items():
        if isinstance(value, Mapping) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def parse_value(text: str) -> Any:
    """Interpret an override as a TOML value, falling back to a bare string."""
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def set_path(config: dict, dotted: str, value: Any) -> None:
    keys = [k for k in dotted.split(".") if k]
    if not keys:
        raise ConfigError("empty override key")
    node = config
    for key in keys[:-1]:
        node = node.setdefault(key, {})
        if not isinstance(node, dict):
            raise ConfigError(f"cannot override inside non-table key {dotted!r}")
    node[keys[-1]] = value


def env_overrides(environ: Mapping[str, str]) -> list[tuple[str, Any]]:
    out = []
    for name in sorted(environ):
        if name.startswith(ENV_PREFIX):
            dotted = name[len(ENV_PREFIX):].lower().replace("__", ".")
            out.append((dotted, parse_value(environ[name])))
    return out


def load_config(path=None, overrides: list[tuple[str, Any]] | None = None,
                environ: Mapping[str, str] | None = None) -> dict:
    """Resolved configuration with defaults filled in.

    Relative data paths are resolved against the config file's directory.
    """
    raw: dict = {}
    base_dir = Path.cwd()
    if path is not None:
        path = Path(path)
        with path.open("rb") as fh:
            try:
                raw = tomllib.load(fh)
            except tomllib.TOMLDecodeError as exc:
                raise ConfigError(f"{path}: {exc}") from None
        base_dir = path.resolve().parent
    version = raw.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {version!r}; expected {SCHEMA_VERSION}")
    config = _merge(DEFAULTS, raw)
    for dotted, value in env_overrides(os.environ if environ is None else environ):
        set_path(config, dotted, value)
    for dotted, value in overrides or []:
        set_path(config, dotted, value)
    for key in ("panel", "institutions"):
        value = config["data"].get(key)
        if value:
            config["data"][key] = str((base_dir / value).resolve()) if not Path(value).is_absolute() else value
    if config.get("seed") is not None:
        seed = int(config["seed"])
        if not 0 <= seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        config["seed"] = seed
    return config


def require_seed(config: dict, command: str) -> int:
    if config.get("seed") is None:
        raise ConfigError(f"'{command}' is stochastic and needs a seed (config key 'seed' or --seed)")
    return config["seed"]
