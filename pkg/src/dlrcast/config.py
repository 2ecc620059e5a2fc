"""Run configuration: JSON documents validated against a closed schema.

A config file may omit sections or keys; missing values come from the
``demo-20bus`` built-in.  Unknown keys anywhere are rejected.
"""
from __future__ import annotations

import copy
import json
from importlib import resources
from pathlib import Path

import jsonschema

from .model import VARIANTS

BUILTIN = ("demo-20bus", "tx-123bus")


class ConfigError(ValueError):
    """Invalid or unreadable run configuration (CLI exit code 2)."""


def _obj(properties: dict) -> dict:
    return {"type": "object", "properties": properties, "additionalProperties": False}


_pos = {"type": "number", "exclusiveMinimum": 0}
_posint = {"type": "integer", "minimum": 1}
_nonneg = {"type": "number", "minimum": 0}

SCHEMA = _obj({
    "grid": _obj({
        "source": {"enum": ["synthetic", "file"]},
        "path": {"type": "string"},
        "n_buses": {"type": "integer", "minimum": 2},
        "n_lines": _posint,
        "n_parallel": {"type": "integer", "minimum": 0},
        "center": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
        "span_deg": _pos,
    }),
    "weather": _obj({
        "days": {"type": "integer"},
        "start": {"type": "string", "pattern": r"^\d{4}-\d{2}-\d{2}T\d{2}:\d{2}$"},
        "length_scale_km": _pos,
        "drift_hours_per_degree": _nonneg,
    }),
    "thermal": _obj({
        "diameter": _pos,
        "resistance": _pos,
        "emissivity": {"type": "number", "minimum": 0, "maximum": 1},
        "absorptivity": {"type": "number", "minimum": 0, "maximum": 1},
        "max_temp": {"type": "number"},
    }),
    "model": _obj({
        "hidden": _posint,
        "head_hidden": _posint,
        "quantiles": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0,
                                                  "exclusiveMaximum": 1},
                      "minItems": 2, "maxItems": 2},
        "cell_activation": {"enum": ["sigmoid", "tanh"]},
        "shared_heads": {"type": "boolean"},
    }),
    "train": _obj({
        "epochs": _posint,
        "learning_rate": _pos,
        "weight_decay": _nonneg,
        "batch_size": _posint,
        "batch_size_overrides": {"type": "object", "additionalProperties": False,
                                 "properties": {v: _posint for v in VARIANTS}},
        "clip_norm": _pos,
        "val_fraction": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
    }),
    "eval": _obj({
        "train_ratio": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "stride": _posint,
    }),
    "io": _obj({"out_dir": {"type": "string"}}),
    "seed": {"type": "integer", "minimum": 0},
})


def builtin(name: str) -> dict:
    if name not in BUILTIN:
        raise ConfigError(f"unknown built-in config {name!r}; choose from {', '.join(BUILTIN)}")
    text = resources.files("dlrcast").joinpath("configs", f"{name}.json").read_text()
    return json.loads(text)


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def validate(doc) -> None:
    try:
        jsonschema.validate(doc, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config error at {where}: {exc.message}") from None
    grid = doc.get("grid", {})
    if grid.get("source") == "file" and "path" not in grid:
        raise ConfigError("config error at grid: source 'file' needs a path")
    q = doc.get("model", {}).get("quantiles")
    if q is not None and not q[0] < q[1]:
        raise ConfigError(f"config error at model/quantiles: need lower < upper, got {q}")


def resolve(doc: dict) -> dict:
    """Validate a (possibly partial) config and fill it from the demo defaults."""
    validate(doc)
    full = _merge(builtin("demo-20bus"), doc)
    if full["grid"].get("source") == "file":
        for key in ("n_buses", "n_lines", "n_parallel", "center", "span_deg"):
            full["grid"].pop(key, None)
    validate(full)
    return full


def load_config(spec: str | Path) -> dict:
    """Load a built-in config by name or a JSON file by path."""
    spec = str(spec)
    if spec in BUILTIN:
        return resolve(builtin(spec))
    path = Path(spec)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {spec}: {exc.strerror}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {spec} is not valid JSON: {exc}") from None
    validate(doc)
    if doc.get("grid", {}).get("source") == "file":
        grid_path = Path(doc["grid"].get("path", ""))
        if doc["grid"].get("path") and not grid_path.is_absolute():
            doc["grid"]["path"] = str((path.parent / grid_path).resolve())
    return resolve(doc)


def batch_size_for(cfg: dict, variant: str) -> int:
    train = cfg["train"]
    return train.get("batch_size_overrides", {}).get(variant, train["batch_size"])
