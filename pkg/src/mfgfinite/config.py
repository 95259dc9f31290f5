"""Scenario files: JSON schema, loading with located diagnostics, defaults."""
from __future__ import annotations

import copy
import hashlib
import json
from pathlib import Path

import jsonschema

from .model import ConfigError

_num = {"type": "number"}
_pos_int = {"type": "integer", "minimum": 1}
_matrix = {"type": "array", "items": {"type": "array", "items": _num}}
_scalar_or_array = {"anyOf": [_num, {"type": "array"}]}

SCHEMA = {
    "type": "object",
    "required": ["m", "T", "rate_bounds", "p_init", "seed"],
    "properties": {
        "name": {"type": "string"},
        "m": {"type": "integer", "minimum": 2},
        "T": {"type": "number", "exclusiveMinimum": 0},
        "control_dim": _pos_int,
        "control_box": _matrix,
        "rate_bounds": {"type": "array", "items": _num, "minItems": 2, "maxItems": 2},
        "mask": {"anyOf": [{"type": "null"}, {"type": "array", "items": {"type": "array",
                                                                            "items": {"type": "boolean"}}}]},
        "p_init": {"type": "array", "items": {"type": "number", "minimum": 0}},
        "seed": {"type": "integer", "minimum": 0},
        "family": {
            "type": "object",
            "properties": {
                "q": {"type": "object", "properties": {
                    "type": {"enum": ["linear"]}, "base": _scalar_or_array,
                    "slope": _scalar_or_array, "p_coupling": _scalar_or_array}},
                "f0": {"type": "object", "properties": {
                    "type": {"enum": ["quadratic", "quartic"]}, "gamma": _num,
                    "linear": _scalar_or_array, "quartic": _num}},
                "f1": {"type": "object", "properties": {
                    "type": {"enum": ["congestion", "none"]}, "base": _scalar_or_array, "kappa": _num}},
                "g": {"type": "object", "properties": {
                    "type": {"enum": ["congestion", "none"]}, "base": _scalar_or_array, "kappa": _num}},
                "f2": {"type": "object", "properties": {
                    "type": {"enum": ["control_mean", "none"]}, "lam": _num}},
            },
        },
        "grid": {"type": "object", "properties": {"n_steps": _pos_int}},
        "solver": {"type": "object", "properties": {
            "damping": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
            "tol": {"type": "number", "exclusiveMinimum": 0}, "max_iter": _pos_int}},
        "mc": {"type": "object", "properties": {"n_paths": _pos_int, "n_write": {"type": "integer",
                                                                                  "minimum": 0}}},
        "verify": {"type": "object", "properties": {"n_candidates": {"type": "integer", "minimum": 0}}},
        "nplayer": {"type": "object", "properties": {
            "N_list": {"type": "array", "items": _pos_int, "minItems": 2},
            "reps": {"type": "integer", "minimum": 2},
            "N_deviation": {"type": "array", "items": {"type": "integer", "minimum": 2}},
            "n_deviations": _pos_int, "n_mc": {"type": "integer", "minimum": 2}}},
        "policy": {"type": "object", "properties": {
            "type": {"enum": ["equilibrium", "constant"]}, "value": {"type": "array"}}},
        "likelihood": {"type": "object", "properties": {
            "rates": _matrix, "p0": {"type": "array", "items": _num},
            "t": {"type": "number", "minimum": 0}, "n_steps": _pos_int}},
        "outputs": {"type": "string"},
    },
}

DEFAULTS = {
    "grid": {},
    "solver": {"damping": 0.5, "tol": 1e-6, "max_iter": 200},
    "mc": {"n_paths": 10000, "n_write": 20},
    "verify": {"n_candidates": 50},
    "nplayer": {"N_list": [8, 16, 32, 64, 128, 256, 512], "reps": 64, "N_deviation": [16, 256],
                "n_deviations": 25, "n_mc": 400},
    "policy": {"type": "equilibrium"},
}


def _where(err: jsonschema.ValidationError) -> str:
    path = ".".join(str(p) for p in err.absolute_path)
    if err.validator == "required":
        missing = err.message.split("'")[1]
        path = f"{path}.{missing}" if path else missing
    return path or "<root>"


def validate_config(cfg) -> dict:
    """Schema-check ``cfg``; raise ConfigError naming the offending field."""
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(cfg), key=lambda e: (len(e.absolute_path), e.message))
    if errors:
        e = errors[0]
        raise ConfigError(_where(e), e.message)
    if len(cfg["p_init"]) != cfg["m"]:
        raise ConfigError("p_init", f"needs {cfg['m']} entries, got {len(cfg['p_init'])}")
    if abs(sum(cfg["p_init"]) - 1.0) > 1e-12:
        raise ConfigError("p_init", "entries must sum to 1")
    out = copy.deepcopy(cfg)
    for key, vals in DEFAULTS.items():
        sect = dict(vals)
        sect.update(out.get(key, {}))
        out[key] = sect
    return out


def load_config(path) -> dict:
    """Read and validate a JSON scenario; syntax errors report line and column."""
    text = Path(path).read_text()
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"line {exc.lineno} column {exc.colno}", exc.msg) from None
    return validate_config(cfg)


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()
