"""Plain-text ``key = value`` experiment configuration.

Blank lines and ``#`` comments are ignored. Keys are the long CLI option
names with dashes or underscores (``t_end`` and ``t-end`` are the same key).
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

from .lattice import derived_gamma
from .measures import parse_measure, spec_warnings

KINDS = ("simulate", "ensemble", "sample-measure", "kernel-g", "sde", "pde", "fast-field",
         "exact", "analyze", "calibrate")

# key -> (type, check, message)
_FIELDS = {
    "kind": (str, lambda v: v in KINDS, f"must be one of {KINDS}"),
    "n": (int, lambda v: v >= 4, "lattice size must be >= 4"),
    "a": (float, lambda v: v >= 0, "reaction strength must be >= 0"),
    "theta": (float, lambda v: math.isfinite(v), "must be finite"),
    "init": (str, None, None),
    "mode": (str, lambda v: v in ("accelerated", "hydrodynamic"), "must be accelerated or hydrodynamic"),
    "t_end": (float, lambda v: v > 0, "must be > 0"),
    "n_times": (int, lambda v: v >= 1, "must be >= 1"),
    "traj": (int, lambda v: v >= 1, "must be >= 1"),
    "seed": (int, lambda v: v >= 0, "must be a non-negative integer"),
    "out": (str, None, None),
}

_EXTRA_TYPES = {
    "delta": float, "b": float, "c": float, "L": int, "grid": int, "h": float, "T": float,
    "paths": int, "y0": str, "G": int, "dt": float, "rho0": str, "K": int, "samples": int,
    "ref": str, "measure": str, "count": int, "gamma": float, "max_events": int,
    "observables": str, "workers": int, "points": int, "t": float, "t_max": float,
    "what": str, "run": str, "alpha": float, "smooth": int, "record": int,
}


class ConfigError(ValueError):
    def __init__(self, errors: list[str]):
        super().__init__("; ".join(errors))
        self.errors = errors


@dataclass
class ExperimentConfig:
    kind: str = "simulate"
    n: int = 64
    a: float = 1.0
    theta: float = 0.0
    init: str = "ising:b=0,c=2"
    mode: str = "accelerated"
    t_end: float = 1.0
    n_times: int = 11
    traj: int = 1
    seed: int = 0
    out: str = ""
    extra: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list, compare=False)

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in _FIELDS}
        d.update(self.extra)
        return d

    def to_text(self) -> str:
        lines = [f"{k} = {_format_value(v)}" for k, v in self.to_dict().items()]
        return "\n".join(lines) + "\n"

    def hash(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True, default=str)
        return hashlib.sha256(payload.encode()).hexdigest()


def _format_value(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def normalise_key(key: str) -> str:
    return key.strip().replace("-", "_")


def parse_kv(text: str) -> tuple[dict, list[str]]:
    """Split ``key = value`` lines; returns ``(raw dict, errors)``."""
    raw, errors = {}, []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            errors.append(f"line {lineno}: expected 'key = value', got {line!r}")
            continue
        key, value = line.split("=", 1)
        key = normalise_key(key)
        if key in raw:
            errors.append(f"line {lineno}: duplicate key {key!r}")
        raw[key] = value.strip()
    return raw, errors


def _coerce(tp, value):
    if isinstance(value, tp) and not (tp is int and isinstance(value, bool)):
        return value
    if tp is int:
        f = float(value)
        if not f.is_integer():
            raise ValueError(f"expected an integer, got {value!r}")
        return int(f)
    return tp(value)


def config_from_mapping(raw: dict) -> ExperimentConfig:
    """Validate a mapping of field values; raises :class:`ConfigError` with every problem found."""
    errors: list[str] = []
    values = {}
    extra = {}
    for key, value in raw.items():
        key = normalise_key(key)
        if key in _FIELDS:
            tp, check, msg = _FIELDS[key]
            try:
                v = _coerce(tp, value)
            except (TypeError, ValueError):
                errors.append(f"{key}: cannot parse {value!r} as {tp.__name__}")
                continue
            if check is not None and not check(v):
                errors.append(f"{key}: {msg} (got {v!r})")
                continue
            values[key] = v
        elif key in _EXTRA_TYPES:
            try:
                extra[key] = _coerce(_EXTRA_TYPES[key], value)
            except (TypeError, ValueError):
                errors.append(f"{key}: cannot parse {value!r} as {_EXTRA_TYPES[key].__name__}")
        else:
            errors.append(f"{key}: unknown configuration key")
    cfg = ExperimentConfig(**values, extra=extra)
    warns = []
    if not any(e.startswith(("n:", "theta:")) for e in errors):
        try:
            derived_gamma(cfg.n, cfg.theta)
        except ValueError as exc:
            errors.append(f"theta: {exc}")
    for key in ("init", "ref", "measure"):
        text = cfg.init if key == "init" else extra.get(key)
        if text is None or (key == "init" and text.startswith("hex:")):
            continue
        try:
            spec = parse_measure(text)
        except ValueError as exc:
            errors.append(f"{key}: {exc}")
            continue
        warns.extend(f"{key}: {w}" for w in spec_warnings(spec))
    for key in ("b",):
        if key in extra and extra[key] < 0:
            errors.append(f"{key}: must be >= 0 (got {extra[key]!r})")
    if "delta" in extra and not -1 < extra["delta"] < 1:
        errors.append(f"delta: must lie in (-1, 1) (got {extra['delta']!r})")
    if "L" in extra and extra["L"] < 1:
        errors.append(f"L: must be >= 1 (got {extra['L']!r})")
    if errors:
        raise ConfigError(errors)
    cfg.warnings = warns
    return cfg


def validate_config(text: str):
    """Parse and validate config text.

    Returns the :class:`ExperimentConfig` on success or the list of
    field-level error messages; never raises on bad input.
    """
    raw, errors = parse_kv(text)
    try:
        cfg = config_from_mapping(raw)
    except ConfigError as exc:
        return errors + exc.errors
    if errors:
        return errors
    return cfg
