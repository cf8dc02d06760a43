"""Reading observation and parameter files."""
from __future__ import annotations

import json
import math
import warnings
from pathlib import Path

from .errors import SchemaError
from .estimators import Observation
from .model import ModelParams

FRACTION_SUM_TOL = 1e-6


def _load_json(path) -> dict:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(data, dict):
        raise SchemaError(f"{path}: top level must be an object")
    return data


def _number(data, key, *, minimum=0.0):
    if key not in data:
        raise SchemaError(f"missing field {key!r}")
    value = data[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise SchemaError(f"field {key!r} must be a finite number")
    if value < minimum:
        raise SchemaError(f"field {key!r} must be >= {minimum}, got {value!r}")
    return value


def observation_from_dict(data: dict) -> Observation:
    """Build an observation from its JSON form.

    ``clones`` holds integer clone sizes, or, when ``total_resistant`` is
    present, fractions of the resistant population that must sum to 1.
    """
    n = _number(data, "n", minimum=2)
    gamma = _number(data, "gamma")
    if not gamma > 0:
        raise SchemaError("field 'gamma' must be positive")
    z0 = _number(data, "z0")
    clones = data.get("clones")
    if not isinstance(clones, list):
        raise SchemaError("field 'clones' must be a list")
    for c in clones:
        if isinstance(c, bool) or not isinstance(c, (int, float)) or not math.isfinite(c):
            raise SchemaError("clone entries must be finite numbers")
        if c < 0:
            raise SchemaError("clone entries must be non-negative")

    if "total_resistant" in data:
        total = _number(data, "total_resistant")
        if abs(sum(clones) - 1.0) > FRACTION_SUM_TOL:
            raise SchemaError(f"clone fractions sum to {sum(clones)!r}, not 1")
        sizes = [round(f * total) for f in clones]
        dropped = sum(1 for s in sizes if s == 0)
        if dropped:
            warnings.warn(f"{dropped} clone(s) rounded to zero cells and were dropped",
                          stacklevel=2)
        sizes = [s for s in sizes if s > 0]
    else:
        if any(float(c) != int(c) for c in clones):
            raise SchemaError("clone sizes must be integers (give total_resistant for fractions)")
        sizes = [int(c) for c in clones if c > 0]
    return Observation(n=n, gamma=float(gamma), z0=z0, clone_sizes=tuple(sizes))


def ingest_observation(path) -> Observation:
    return observation_from_dict(_load_json(path))


def observation_to_dict(obs: Observation) -> dict:
    return {"n": obs.n, "gamma": obs.gamma, "z0": obs.z0, "clones": list(obs.clone_sizes)}


def params_from_dict(data: dict) -> ModelParams:
    try:
        return ModelParams(
            n=int(data["n"]), alpha=float(data["alpha"]), r0=float(data["r0"]),
            d0=float(data["d0"]), r1=float(data["r1"]), d1=float(data["d1"]),
            beta=float(data.get("beta", 1.0)),
        )
    except KeyError as exc:
        raise SchemaError(f"missing parameter {exc.args[0]!r}") from exc
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"bad parameter value: {exc}") from exc


def load_json(path) -> dict:
    return _load_json(path)
