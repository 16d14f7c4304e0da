"""Flat run configuration with dotted keys.

Resolution order: schema defaults, then ``--preset``, then the YAML file,
then ``--set key=value`` overrides.  Every key is validated against
:data:`SCHEMA` before anything runs; unknown keys are rejected.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from typing import Any, Callable, Optional

import yaml


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key."""


@dataclass(frozen=True)
class Field:
    kind: str  # float, int, str, bool, floats, ints, bools
    default: Any
    check: Optional[Callable[[Any], bool]] = None
    rule: str = ""
    choices: tuple = ()
    nullable: bool = False


def _pos(v):
    return v > 0


def _nonneg(v):
    return v >= 0


def _at_least(k):
    return lambda v: v >= k


def _all(pred):
    return lambda vs: all(pred(v) for v in vs)


SCHEMA: dict[str, Field] = {
    "acceptance.kind": Field("str", "polynomial", choices=("classical", "polynomial")),
    "acceptance.tau": Field("float", 1.0, _pos, "must be > 0"),
    "cooling.kind": Field("str", "power", choices=("power", "logarithmic", "constant")),
    "cooling.alpha": Field("float", 1 / 3, lambda v: 0 < v < 1, "must lie in (0, 1)"),
    "cooling.scale": Field("float", 1.0, _pos, "must be > 0"),
    "cooling.beta0": Field("float", 1.0, _pos, "must be > 0"),
    "cooling.beta": Field("float", 1.0, _pos, "must be > 0"),
    "precision.kind": Field("str", "none", choices=("none", "constant", "affine", "power")),
    "precision.n": Field("int", 100, _at_least(1), "must be >= 1"),
    "precision.n0": Field("float", 0.0, _nonneg, "must be >= 0"),
    "precision.n1": Field("float", 1.0, _nonneg, "must be >= 0"),
    "precision.delta": Field("float", 1.0, _pos, "must be > 0"),
    "precision.floor": Field("int", 1, _at_least(1), "must be >= 1"),
    "domain.lower": Field("floats", [-0.5]),
    "domain.upper": Field("floats", [0.5]),
    "domain.log_scale": Field("bools", []),
    "kernel.kind": Field("str", "uniform", choices=("uniform", "gaussian_rw")),
    "kernel.step_rule": Field("str", "paper_default", choices=("paper_default", "fixed")),
    "kernel.step": Field("floats", [], _all(_pos), "entries must be > 0"),
    "annealer.iterations": Field("int", 1000, _at_least(1), "must be >= 1"),
    "annealer.record_every": Field("int", 1, _at_least(1), "must be >= 1"),
    "objective.name": Field("str", "neg_abs", choices=("neg_abs", "noisy_neg_abs", "benchmark_pf")),
    "objective.noise": Field("float", 1.0, _nonneg, "must be >= 0"),
    "rate.reps": Field("int", 10_000, _at_least(100), "must be >= 100"),
    "rate.checkpoints": Field("ints", [100, 200, 500, 1000, 2000, 5000, 10_000, 20_000, 50_000, 100_000],
                              lambda v: len(v) > 0 and v == sorted(v) and v[0] >= 0,
                              "must be a non-empty sorted list of non-negative integers"),
    "rate.epsilons": Field("floats", [0.05], lambda v: len(v) > 0 and all(e > 0 for e in v),
                           "must be a non-empty list of positive numbers"),
    "rate.fit_min": Field("float", None, _pos, "must be > 0", nullable=True),
    "rate.fit_max": Field("float", None, _pos, "must be > 0", nullable=True),
    "rate.compare": Field("bool", False),
    "rate.synthetic": Field("bool", False),
    "rate.block_size": Field("int", 2500, _at_least(1), "must be >= 1"),
    "benchmark.T": Field("int", 500, _at_least(1), "must be >= 1"),
    "benchmark.reps": Field("int", 150, _at_least(1), "must be >= 1"),
    "benchmark.theta0": Field("floats", [0.9, 18.0, 10.0, math.sqrt(10.0), 1.0],
                              lambda v: len(v) == 5, "must have 5 entries (a, b, gamma, sigma_v, sigma_w)"),
    "benchmark.block_size": Field("int", 150, _at_least(1), "must be >= 1"),
    "benchmark.desk_scale": Field("bool", False),
    "pf.T": Field("int", 50, _at_least(1), "must be >= 1"),
    "pf.Ns": Field("ints", [100, 1000, 10_000], lambda v: len(v) > 0 and min(v) >= 1,
                   "must be a non-empty list of positive integers"),
    "pf.seeds": Field("int", 20, _at_least(2), "must be >= 2"),
    "lg.phi": Field("float", 0.8),
    "lg.sigma_v": Field("float", 1.0, _pos, "must be > 0"),
    "lg.c": Field("float", 1.0),
    "lg.sigma_w": Field("float", 1.0, _pos, "must be > 0"),
    "lg.m0": Field("float", 0.0),
    "lg.s0": Field("float", 1.0, _pos, "must be > 0"),
    "couple.T": Field("int", 10, _at_least(1), "must be >= 1"),
    "couple.Ns": Field("ints", [100, 200, 400], lambda v: len(v) > 0 and min(v) >= 1,
                       "must be a non-empty list of positive integers"),
    "couple.ratios": Field("floats", [1.1, 1.25, 1.5], lambda v: len(v) > 0 and min(v) >= 1,
                           "must be a non-empty list of numbers >= 1"),
    "couple.reps": Field("int", 50, _at_least(1), "must be >= 1"),
    "couple.t_fit": Field("int", 5, _at_least(1), "must be >= 1"),
    "couple.kernel_reps": Field("int", 0, _nonneg, "must be >= 0"),
    "couple.kernel_beta": Field("float", 10.0, _pos, "must be > 0"),
    "couple.kernel_N": Field("int", 10, _at_least(1), "must be >= 1"),
    "couple.kernel_Nprime": Field("int", 20, _at_least(1), "must be >= 1"),
    "circle.drift": Field("float", 0.1),
    "circle.sigma": Field("float", 0.1, _pos, "must be > 0"),
    "circle.kappa": Field("float", 0.5, lambda v: 0 <= v < 1, "must lie in [0, 1)"),
}

_APPA = {
    "acceptance.kind": "polynomial", "acceptance.tau": 1.0,
    "cooling.kind": "power", "cooling.alpha": 1 / 3, "cooling.scale": 1.0,
    "domain.lower": [-0.5], "domain.upper": [0.5], "domain.log_scale": [],
    "kernel.kind": "uniform", "objective.name": "neg_abs",
    "annealer.iterations": 1000,
}

PRESETS: dict[str, dict] = {
    "appendix-a-example": dict(_APPA),
    "fast-rate-13": {
        **_APPA,
        "rate.reps": 10_000,
        "rate.epsilons": [0.05],
        "rate.checkpoints": [100, 200, 500, 1000, 2000, 5000, 10_000, 20_000, 50_000, 100_000],
    },
    "paper-benchmark": {
        "acceptance.kind": "polynomial", "acceptance.tau": 1.0,
        "cooling.kind": "power", "cooling.alpha": 0.25, "cooling.scale": 10.0,
        "precision.kind": "affine", "precision.n0": 0.0, "precision.n1": 1.0, "precision.floor": 20,
        "domain.lower": [0.45, 9.0, 5.0, 0.316, 0.5],
        "domain.upper": [1.8, 36.0, 20.0, 36.0, 2.0],
        "domain.log_scale": [False, False, False, True, True],
        "kernel.kind": "gaussian_rw", "kernel.step_rule": "paper_default",
        "objective.name": "benchmark_pf",
        "annealer.iterations": 5000,
        "benchmark.T": 500, "benchmark.reps": 150, "benchmark.block_size": 150,
        "benchmark.theta0": [0.9, 18.0, 10.0, math.sqrt(10.0), 1.0],
    },
    "linear-gaussian": {
        "lg.phi": 0.8, "lg.sigma_v": 1.0, "lg.c": 1.0, "lg.sigma_w": 1.0, "lg.m0": 0.0, "lg.s0": 1.0,
        "pf.T": 50, "pf.Ns": [100, 1000, 10_000], "pf.seeds": 20,
    },
    "compact-coupling": {
        "circle.drift": 0.1, "circle.sigma": 0.1, "circle.kappa": 0.5,
        "couple.T": 10, "couple.Ns": [100, 200, 400], "couple.ratios": [1.1, 1.25, 1.5],
        "couple.reps": 50, "couple.t_fit": 5,
    },
}

DESK_SCALE = {"benchmark.T": 100, "benchmark.reps": 20, "annealer.iterations": 2000,
              "benchmark.block_size": 20}


def _coerce_scalar(key, kind, v):
    if kind == "bool":
        if isinstance(v, bool):
            return v
        raise ConfigError(f"{key}: expected true/false, got {v!r}")
    if kind == "int":
        if isinstance(v, bool):
            raise ConfigError(f"{key}: expected an integer, got {v!r}")
        if isinstance(v, int):
            return v
        if isinstance(v, float) and v.is_integer():
            return int(v)
        raise ConfigError(f"{key}: expected an integer, got {v!r}")
    if kind == "float":
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"{key}: expected a number, got {v!r}")
        v = float(v)
        if not math.isfinite(v):
            raise ConfigError(f"{key}: must be finite")
        return v
    if kind == "str":
        if not isinstance(v, str):
            raise ConfigError(f"{key}: expected a string, got {v!r}")
        return v
    raise AssertionError(kind)


def _coerce(key: str, field: Field, v):
    if v is None:
        if field.nullable:
            return None
        raise ConfigError(f"{key}: a value is required")
    if field.kind in ("floats", "ints", "bools"):
        if not isinstance(v, (list, tuple)):
            v = [v]
        out = [_coerce_scalar(key, field.kind[:-1], x) for x in v]
    else:
        out = _coerce_scalar(key, field.kind, v)
    if field.choices and out not in field.choices:
        raise ConfigError(f"{key}: must be one of {', '.join(field.choices)}; got {out!r}")
    if field.check is not None and not field.check(out):
        raise ConfigError(f"{key}: {field.rule}; got {out!r}")
    return out


def flatten(doc, prefix: str = "") -> dict:
    """Flatten nested mappings into dotted keys (flat documents pass through)."""
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a mapping of keys to values")
    out = {}
    for k, v in doc.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(flatten(v, key + "."))
        else:
            out[key] = v
    return out


def load_file(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = yaml.safe_load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config file {path}: {exc}") from None
    return {} if doc is None else flatten(doc)


def parse_override(text: str) -> tuple[str, Any]:
    if "=" not in text:
        raise ConfigError(f"override {text!r} must have the form key=value")
    key, raw = text.split("=", 1)
    try:
        value = yaml.safe_load(raw)
    except yaml.YAMLError:
        raise ConfigError(f"{key}: cannot parse value {raw!r}") from None
    return key.strip(), value


def _cross_checks(cfg: dict) -> None:
    d = len(cfg["domain.lower"])
    if d == 0:
        raise ConfigError("domain.lower: must not be empty")
    if len(cfg["domain.upper"]) != d:
        raise ConfigError("domain.upper: must have the same length as domain.lower")
    if any(lo >= hi for lo, hi in zip(cfg["domain.lower"], cfg["domain.upper"])):
        raise ConfigError("domain.upper: every entry must exceed the matching domain.lower")
    if cfg["domain.log_scale"] and len(cfg["domain.log_scale"]) != d:
        raise ConfigError("domain.log_scale: must be empty or have one entry per coordinate")
    for lo, ls in zip(cfg["domain.lower"], cfg["domain.log_scale"]):
        if ls and lo <= 0:
            raise ConfigError("domain.log_scale: log-scale coordinates need a positive lower bound")
    if cfg["kernel.step"] and len(cfg["kernel.step"]) not in (1, d):
        raise ConfigError("kernel.step: must have 1 entry or one per coordinate")
    if cfg["kernel.kind"] == "gaussian_rw" and cfg["kernel.step_rule"] == "fixed" and not cfg["kernel.step"]:
        raise ConfigError("kernel.step: required when kernel.step_rule is fixed")
    if cfg["couple.kernel_Nprime"] < cfg["couple.kernel_N"]:
        raise ConfigError("couple.kernel_Nprime: must be >= couple.kernel_N")
    if cfg["objective.name"] == "benchmark_pf" and d != 5:
        raise ConfigError("domain.lower: the benchmark objective needs a 5-dimensional domain")
    if cfg["objective.name"] != "neg_abs" and cfg["precision.kind"] == "none":
        raise ConfigError("precision.kind: a noisy objective needs a precision schedule")


def resolve(preset: Optional[str] = None, file_values: Optional[dict] = None,
            overrides: Optional[dict] = None, desk_scale: bool = False) -> dict:
    """Merge layers and validate; returns a complete, typed flat config."""
    raw = {k: f.default for k, f in SCHEMA.items()}
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"--preset: unknown preset {preset!r}; choose from {', '.join(sorted(PRESETS))}")
        raw.update(PRESETS[preset])
    for layer in (file_values or {}, overrides or {}):
        for k, v in layer.items():
            if k not in SCHEMA:
                raise ConfigError(f"{k}: unknown config key")
            raw[k] = v
    if desk_scale or raw.get("benchmark.desk_scale") is True:
        raw.update(DESK_SCALE)
        raw["benchmark.desk_scale"] = True
    cfg = {k: _coerce(k, SCHEMA[k], raw[k]) for k in SCHEMA}
    _cross_checks(cfg)
    return cfg


def canonical_json(cfg: dict) -> str:
    return json.dumps(cfg, sort_keys=True, separators=(",", ":"))


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(canonical_json(cfg).encode("utf-8")).hexdigest()
