"""Experiment configuration as an INI file.

Sections and keys (defaults in brackets)::

    [geometry]  sensor_rows [64]  sensor_cols [64]  block_rows [16]
                block_cols [16]  f_dmd [480]
    [optics]    objective_blur_sigma [0]  relay_blur_sigma [0]
                misalignment_shift [0,0]
    [patterns]  kind (required: random-binary | hadamard | pixel-scan)
                count (required; "auto" lets pixel-scan pick its length)
                (both optional for calibrate)
                density [0.5]  groups [sensor grid]  e.g. 18,20
    [noise]     snr_db [none]
    [solver]    lam [1e-4]  max_iters [500]  inner_prox_iters [15]
                tol [1e-6]  step [auto]  nonneg [true]
    [scene]     kind [bars]  (bars | checker | usaf-like | moving)
                frequency [0.0625]  size [8]  frames [1]
                velocity [0,1]  object_size [8]
    [output]    dir [$FPACS_OUTPUT_ROOT or ./fpacs-out]
    [run]       seed [0]

Unknown sections or keys are rejected.  Any key can be overridden with a
``section.key=value`` string (see :func:`apply_overrides`).
"""
from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .model import GeometryConfig, NoiseSpec, OpticsConfig
from .recon import SolverConfig

OUTPUT_ENV = "FPACS_OUTPUT_ROOT"

DEFAULTS: dict[str, dict[str, str]] = {
    "geometry": {"sensor_rows": "64", "sensor_cols": "64", "block_rows": "16",
                 "block_cols": "16", "f_dmd": "480"},
    "optics": {"objective_blur_sigma": "0", "relay_blur_sigma": "0", "misalignment_shift": "0,0"},
    "patterns": {"kind": "", "count": "", "density": "0.5", "groups": ""},
    "noise": {"snr_db": "none"},
    "solver": {"lam": "1e-4", "max_iters": "500", "inner_prox_iters": "15", "tol": "1e-6",
               "step": "auto", "nonneg": "true"},
    "scene": {"kind": "bars", "frequency": "0.0625", "size": "8", "frames": "1",
              "velocity": "0,1", "object_size": "8"},
    "output": {"dir": ""},
    "run": {"seed": "0"},
}
REQUIRED = (("patterns", "kind"), ("patterns", "count"))


@dataclass
class PatternSpec:
    kind: str
    count: int | None
    density: float = 0.5
    groups: tuple[int, int] | None = None


@dataclass
class SceneSpec:
    kind: str = "bars"
    frequency: float = 0.0625
    size: int = 8
    frames: int = 1
    velocity: tuple[float, float] = (0.0, 1.0)
    object_size: int = 8


@dataclass
class ExperimentConfig:
    geometry: GeometryConfig
    optics: OpticsConfig
    patterns: PatternSpec
    noise: NoiseSpec
    solver: SolverConfig
    scene: SceneSpec
    output_dir: Path
    seed: int = 0
    raw: dict = field(default_factory=dict)

    def flat(self) -> dict[str, str]:
        """All resolved ``section.key`` values, as written to manifests."""
        return {f"{s}.{k}": v for s, keys in self.raw.items() for k, v in keys.items()
                if (s, k) != ("output", "dir")}


def default_output_root() -> Path:
    return Path(os.environ.get(OUTPUT_ENV) or "fpacs-out")


def _parse(section: str, key: str, value: str, kind):
    try:
        return kind(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{section}.{key}: cannot parse {value!r} ({exc})") from None


def _pair(kind):
    def parse(value: str):
        parts = [p.strip() for p in value.split(",")]
        if len(parts) != 2:
            raise ValueError("expected two comma-separated values")
        return tuple(kind(p) for p in parts)
    return parse


def _bool(value: str) -> bool:
    low = value.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError("expected a boolean")


def _optional_float(value: str):
    return None if value.strip().lower() in ("", "none") else float(value)


def read_raw(path=None, text: str | None = None) -> dict[str, dict[str, str]]:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        if text is not None:
            parser.read_string(text)
        elif path is not None:
            with open(path) as fh:
                parser.read_file(fh)
    except configparser.Error as exc:
        raise ConfigError(f"malformed configuration: {exc}") from None
    raw = {s: {} for s in DEFAULTS}
    for section in parser.sections():
        if section not in DEFAULTS:
            raise ConfigError(f"unknown section [{section}]")
        for key, value in parser.items(section):
            if key not in DEFAULTS[section]:
                raise ConfigError(f"unknown key {section}.{key}")
            raw[section][key] = value.strip()
    return raw


def apply_overrides(raw: dict, overrides) -> dict:
    for item in overrides or ():
        name, sep, value = item.partition("=")
        section, dot, key = name.strip().partition(".")
        if not sep or not dot:
            raise ConfigError(f"override {item!r} must look like section.key=value")
        if section not in DEFAULTS or key not in DEFAULTS[section]:
            raise ConfigError(f"unknown key {section}.{key}")
        raw.setdefault(section, {})[key] = value.strip()
    return raw


def resolve(raw: dict, require_patterns: bool = True) -> ExperimentConfig:
    for section, key in REQUIRED if require_patterns else ():
        if not raw.get(section, {}).get(key):
            raise ConfigError(f"missing required key {section}.{key}")
    merged = {s: {**DEFAULTS[s], **raw.get(s, {})} for s in DEFAULTS}

    def get(section, key, kind=str):
        return _parse(section, key, merged[section][key], kind)

    geometry = GeometryConfig(get("geometry", "sensor_rows", int), get("geometry", "sensor_cols", int),
                              get("geometry", "block_rows", int), get("geometry", "block_cols", int),
                              get("geometry", "f_dmd", float))
    optics = OpticsConfig(get("optics", "objective_blur_sigma", float),
                          get("optics", "relay_blur_sigma", float),
                          get("optics", "misalignment_shift", _pair(int)))
    optics.check(geometry)
    count = merged["patterns"]["count"]
    groups = merged["patterns"]["groups"]
    patterns = PatternSpec(
        get("patterns", "kind"),
        None if count in ("auto", "") else get("patterns", "count", int),
        get("patterns", "density", float),
        get("patterns", "groups", _pair(int)) if groups else None,
    )
    seed = get("run", "seed", int)
    noise = NoiseSpec(get("noise", "snr_db", _optional_float), seed)
    step = merged["solver"]["step"]
    solver = SolverConfig(
        lam=get("solver", "lam", float),
        max_iters=get("solver", "max_iters", int),
        inner_prox_iters=get("solver", "inner_prox_iters", int),
        tol=get("solver", "tol", float),
        step=step if step == "auto" else get("solver", "step", float),
        nonneg=get("solver", "nonneg", _bool),
        seed=seed,
    )
    scene = SceneSpec(get("scene", "kind"), get("scene", "frequency", float), get("scene", "size", int),
                      get("scene", "frames", int), get("scene", "velocity", _pair(float)),
                      get("scene", "object_size", int))
    out = merged["output"]["dir"]
    output_dir = Path(out) if out else default_output_root()
    return ExperimentConfig(geometry, optics, patterns, noise, solver, scene, output_dir, seed, merged)


def load(path=None, overrides=(), text: str | None = None, require_patterns: bool = True) -> ExperimentConfig:
    """``require_patterns=False`` is for commands that choose their own patterns (calibration)."""
    return resolve(apply_overrides(read_raw(path, text), overrides), require_patterns)
