"""Run configuration: JSON file + environment overrides, validated by schema.

Environment variables ``TFDMAGIC_<SECTION>__<KEY>`` override config entries
before validation, e.g. ``TFDMAGIC_MODEL__Q=6`` or
``TFDMAGIC_SWEEP__BETA='[1, 2]'``; values are parsed as JSON when possible
and kept as strings otherwise. ``TFDMAGIC_MODE`` overrides the mode.
"""

from __future__ import annotations

import copy
import json
import os
from dataclasses import dataclass
from importlib import resources
from typing import Any, Mapping

import jsonschema
import numpy as np

ENV_PREFIX = "TFDMAGIC_"


class ConfigError(ValueError):
    """Invalid configuration; ``key`` is the dotted path of the offending entry."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}" if key else message)
        self.key = key
        self.reason = message


def load_schema() -> dict:
    return json.loads(resources.files("tfdmagic").joinpath("config_schema.json").read_text())


def _env_overrides(raw: dict, env: Mapping[str, str]) -> dict:
    out = copy.deepcopy(raw)
    for name in sorted(env):
        if not name.startswith(ENV_PREFIX):
            continue
        path = [p.lower() for p in name[len(ENV_PREFIX) :].split("__") if p]
        if not path:
            continue
        text = env[name]
        try:
            value = json.loads(text)
        except json.JSONDecodeError:
            value = text
        node = out
        for part in path[:-1]:
            if not isinstance(node.get(part), dict):
                node[part] = {}
            node = node[part]
        node[path[-1]] = value
    return out


def _dotted(path) -> str:
    return ".".join(str(p) for p in path)


def _schema_error(err: jsonschema.ValidationError) -> ConfigError:
    base = list(err.absolute_path)
    if err.validator == "required":
        missing = [k for k in err.validator_value if k not in err.instance]
        key = _dotted(base + missing[:1])
        return ConfigError(key, f"missing required key '{key}'")
    if err.validator == "additionalProperties":
        allowed = set(err.schema.get("properties", {}))
        extra = sorted(set(err.instance) - allowed)
        key = _dotted(base + extra[:1])
        return ConfigError(key, f"unknown key '{key}'")
    return ConfigError(_dotted(base), err.message)


def _fill_defaults(schema: dict, node: dict) -> None:
    for name, sub in schema.get("properties", {}).items():
        if name not in node and "default" in sub:
            node[name] = copy.deepcopy(sub["default"])
        if isinstance(node.get(name), dict) and sub.get("type") == "object":
            _fill_defaults(sub, node[name])


@dataclass(frozen=True)
class RunConfig:
    mode: str
    data: dict

    def section(self, name: str) -> dict:
        return self.data.get(name, {})

    @property
    def seed(self) -> int:
        return int(self.data["model"].get("seed", 0))

    def times(self) -> np.ndarray:
        spec = self.section("sweep")["t"]
        if isinstance(spec, dict):
            return np.linspace(spec["start"], spec["stop"], spec["num"])
        return np.asarray(spec, dtype=float)

    def betas(self) -> list[float]:
        return [float(b) for b in self.section("sweep")["beta"]]

    def to_json(self) -> str:
        return json.dumps(self.data, sort_keys=True, indent=2)


def validate(raw: Any, env: Mapping[str, str] | None = None) -> RunConfig:
    """Apply environment overrides, validate and fill defaults."""
    if not isinstance(raw, dict):
        raise ConfigError("", "configuration must be a JSON object")
    data = _env_overrides(raw, os.environ if env is None else env)
    schema = load_schema()
    for section in ("contour", "sweep", "solver", "io"):
        data.setdefault(section, {})
    validator = jsonschema.Draft202012Validator(schema)
    errors = sorted(validator.iter_errors(data), key=lambda e: (len(list(e.absolute_path)), str(e.message)))
    if errors:
        raise _schema_error(errors[0])
    _fill_defaults(schema, data)
    mode = data["mode"]
    model = data["model"]
    if mode == "ed":
        if "n_majorana" not in model:
            raise ConfigError("model.n_majorana", "missing required key 'model.n_majorana' (needed by ed mode)")
        if model["q"] > model["n_majorana"]:
            raise ConfigError("model.q", "q must not exceed n_majorana")
        if model["n_majorana"] > 10:
            raise ConfigError("model.n_majorana", "exact diagonalization is limited to n_majorana <= 10")
    if mode == "fit" and "fit" not in data:
        raise ConfigError("fit", "missing required key 'fit' (needed by fit mode)")
    sweep = data["sweep"]
    if isinstance(sweep["t"], dict) and sweep["t"]["stop"] < sweep["t"]["start"]:
        raise ConfigError("sweep.t.stop", "stop must be >= start")
    if data["solver"]["n_freq"] & (data["solver"]["n_freq"] - 1):
        raise ConfigError("solver.n_freq", "must be a power of two")
    return RunConfig(mode, data)


def load_config(path: str | os.PathLike, env: Mapping[str, str] | None = None) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError("", f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError("", f"config is not valid JSON: {exc}") from exc
    return validate(raw, env)
