"""Experiment configuration: a flat ``key = value`` text format.

Keys are exactly the :class:`ExperimentConfig` field names.  Composite
values are comma separated::

    # lines starting with '#' are comments
    params = a=4, b=-2, c=1, d=-1, rho=0.5, x0=1, y0=0
    horizons = 25, 50, 100
    lambda_exponent = 0.5
    n_paths = 1000
    n_steps_per_unit_time = 100
    seed = 42
    radii = 3, 4
    tilt = none            # or: alpha=4.5, beta=-2.5, gamma=1.3, delta=-1.3
    output_path = results
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path as FsPath

from .deviations import TiltedParams
from .errors import ConfigError
from .models import HestonParams

__all__ = [
    "ExperimentConfig",
    "CONFIG_KEYS",
    "parse_config_text",
    "config_from_mapping",
    "load_config",
]

_PARAM_KEYS = ("a", "b", "c", "d", "rho", "x0", "y0")
_TILT_KEYS = ("alpha", "beta", "gamma", "delta")


def _default_params() -> HestonParams:
    return HestonParams(a=4.0, b=-2.0, c=1.0, d=-1.0, rho=0.0, x0=1.0, y0=0.0)


@dataclass(frozen=True)
class ExperimentConfig:
    params: HestonParams = field(default_factory=_default_params)
    horizons: tuple = (25.0, 50.0, 100.0)
    lambda_exponent: float = 0.5
    n_paths: int = 1000
    n_steps_per_unit_time: int = 100
    seed: int = 0
    radii: tuple = (1.0,)
    tilt: TiltedParams | None = None
    output_path: str = "results"

    def __post_init__(self):
        object.__setattr__(self, "horizons", tuple(float(h) for h in self.horizons))
        object.__setattr__(self, "radii", tuple(float(r) for r in self.radii))
        bad = [f"params: {v}" for v in self.params.violations()]
        if not self.horizons:
            bad.append("horizons is empty")
        elif not all(h > 0 and math.isfinite(h) for h in self.horizons):
            bad.append("horizons must be positive")
        elif any(h2 <= h1 for h1, h2 in zip(self.horizons, self.horizons[1:])):
            bad.append("horizons must be strictly increasing")
        if not 0.0 < self.lambda_exponent < 1.0:
            bad.append("lambda_exponent must lie in (0, 1)")
        if not (isinstance(self.n_paths, int) and self.n_paths >= 1):
            bad.append("n_paths must be an integer >= 1")
        if not (isinstance(self.n_steps_per_unit_time, int) and self.n_steps_per_unit_time >= 1):
            bad.append("n_steps_per_unit_time must be an integer >= 1")
        if not (isinstance(self.seed, int) and 0 <= self.seed < 2**64):
            bad.append("seed must be an integer in [0, 2^64)")
        if not all(r >= 0 and math.isfinite(r) for r in self.radii):
            bad.append("radii must be finite and >= 0")
        if bad:
            raise ConfigError("invalid experiment config: " + "; ".join(bad))

    @property
    def dt(self) -> float:
        return 1.0 / self.n_steps_per_unit_time

    def speed(self, T: float) -> float:
        """The moderate-deviation speed ``lambda_T = T^gamma``."""
        return float(T) ** self.lambda_exponent

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self, include_output: bool = True) -> dict:
        out = {
            "params": {k: float(getattr(self.params, k)) for k in _PARAM_KEYS},
            "horizons": list(self.horizons),
            "lambda_exponent": float(self.lambda_exponent),
            "n_paths": self.n_paths,
            "n_steps_per_unit_time": self.n_steps_per_unit_time,
            "seed": self.seed,
            "radii": list(self.radii),
            "tilt": None if self.tilt is None else {k: float(getattr(self.tilt, k)) for k in _TILT_KEYS},
            "output_path": str(self.output_path),
        }
        if not include_output:
            out.pop("output_path")
        return out

    def config_hash(self) -> str:
        """SHA-256 of the canonical JSON of every field except ``output_path``."""
        body = self.to_dict(include_output=False)
        text = json.dumps(body, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()

    def to_text(self) -> str:
        d = self.to_dict()
        lines = [
            "params = " + ", ".join(f"{k}={d['params'][k]!r}" for k in _PARAM_KEYS),
            "horizons = " + ", ".join(repr(h) for h in d["horizons"]),
            f"lambda_exponent = {d['lambda_exponent']!r}",
            f"n_paths = {d['n_paths']}",
            f"n_steps_per_unit_time = {d['n_steps_per_unit_time']}",
            f"seed = {d['seed']}",
            "radii = " + ", ".join(repr(r) for r in d["radii"]),
            "tilt = "
            + ("none" if d["tilt"] is None else ", ".join(f"{k}={d['tilt'][k]!r}" for k in _TILT_KEYS)),
            f"output_path = {d['output_path']}",
        ]
        return "\n".join(lines) + "\n"


CONFIG_KEYS = tuple(f.name for f in dataclasses.fields(ExperimentConfig))


def parse_config_text(text: str) -> dict:
    """Split ``key = value`` lines into a dict of raw strings."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        if key not in CONFIG_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value.strip()
    return out


def _float(text: str, key: str) -> float:
    try:
        return float(text)
    except ValueError as exc:
        raise ConfigError(f"{key}: {text!r} is not a number") from exc


def _int(text: str, key: str) -> int:
    value = _float(text, key)
    if not math.isfinite(value) or value != int(value):
        raise ConfigError(f"{key}: {text!r} is not an integer")
    return int(text) if text.strip().lstrip("+-").isdigit() else int(value)


def _float_list(text: str, key: str) -> tuple:
    items = [t for t in text.replace(",", " ").split() if t]
    if not items:
        raise ConfigError(f"{key}: empty list")
    return tuple(_float(t, key) for t in items)


def _named_floats(text: str, key: str, allowed, defaults=None) -> dict:
    values = dict(defaults or {})
    for item in (t.strip() for t in text.split(",")):
        if not item:
            continue
        name, sep, val = item.partition("=")
        name = name.strip()
        if not sep or name not in allowed:
            raise ConfigError(f"{key}: bad entry {item!r} (allowed names: {', '.join(allowed)})")
        values[name] = _float(val.strip(), f"{key}.{name}")
    return values


def _convert(key: str, text: str):
    if key == "params":
        base = _default_params()
        values = _named_floats(text, key, _PARAM_KEYS, {k: getattr(base, k) for k in _PARAM_KEYS})
        return HestonParams(**values)
    if key == "tilt":
        if text.strip().lower() in ("", "none"):
            return None
        values = _named_floats(text, key, _TILT_KEYS)
        missing = [k for k in ("alpha", "beta") if k not in values]
        if missing:
            raise ConfigError(f"tilt: missing {', '.join(missing)}")
        return TiltedParams(**values)
    if key in ("horizons", "radii"):
        return _float_list(text, key)
    if key == "lambda_exponent":
        return _float(text, key)
    if key in ("n_paths", "n_steps_per_unit_time", "seed"):
        return _int(text, key)
    return text


def config_from_mapping(raw: dict, base: ExperimentConfig | None = None) -> ExperimentConfig:
    """Apply raw string values (from a file or ``--set``) on top of ``base``."""
    unknown = sorted(set(raw) - set(CONFIG_KEYS))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    changes = {k: _convert(k, v) for k, v in raw.items()}
    return dataclasses.replace(base or ExperimentConfig(), **changes)


def load_config(path=None, overrides: dict | None = None) -> ExperimentConfig:
    """Read a config file (optional) and apply string-valued ``overrides``."""
    raw = {}
    if path is not None:
        try:
            text = FsPath(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        raw = parse_config_text(text)
    raw.update(overrides or {})
    return config_from_mapping(raw)
