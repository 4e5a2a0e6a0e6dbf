"""Flat ``section.key = value`` configuration mapped onto the pipeline dataclasses.

Precedence, highest first: command-line flags, the config file, the
``GENESIFT_SEED`` environment variable (seeds only), built-in defaults.
"""

from __future__ import annotations

import os
from dataclasses import fields, replace
from pathlib import Path

from .errors import ParseError
from .metaheuristics import ElephantParams, FireflyParams
from .neural import NetworkConfig
from .pipeline import EvalProtocol, ObjectiveSpec, PipelineConfig

SEED_ENV = "GENESIFT_SEED"

_SECTIONS = {
    "firefly": FireflyParams,
    "elephant": ElephantParams,
    "objective": ObjectiveSpec,
    "net": NetworkConfig,
    "eval": EvalProtocol,
}

# Categorical settings with a single supported value.  They exist so every
# tunable of the reference setup has a key and is echoed by --print-config.
FIXED = {
    "firefly.accelerator": "normal",
    "firefly.chaotic_parameter": "normal",
    "firefly.chaotic_population": "normal",
    "firefly.chaotic_map": "logistic",
    "firefly.mutation_type": "bitflip",
    "elephant.accelerator": "normal",
    "elephant.chaotic_parameter": "normal",
    "elephant.chaotic_map": "logistic",
    "elephant.mutation_type": "bitflip",
    "net.output_activation": "softmax",
    "net.weight_init": "xavier",
    "net.distribution": "normal",
    "net.loss": "mcxent",
    "net.optimization": "sgd",
}

RUN_KEYS = {"run.algorithm": "firefly", "run.seed": "1", "run.jobs": "1",
            "report.decimal_places": "2"}

SEED_KEYS = ("firefly.seed", "elephant.seed", "net.seed", "run.seed")


def _default_for(key):
    section, name = key.split(".", 1)
    if key in FIXED:
        return FIXED[key]
    if key in RUN_KEYS:
        return RUN_KEYS[key]
    return _fmt(getattr(_SECTIONS[section](), name))


def all_keys() -> list[str]:
    keys = [f"{s}.{f.name}" for s, cls in _SECTIONS.items() for f in fields(cls)
            if not f.name.startswith("_")]
    keys += list(FIXED) + list(RUN_KEYS)
    return sorted(keys)


KNOWN_KEYS = frozenset(all_keys())


def _fmt(value) -> str:
    if value is None:
        return "auto"
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    return str(value)


def _coerce(key, raw: str, default):
    text = raw.strip()
    try:
        if key in ("elephant.female_visual_radius", "elephant.male_visual_radius"):
            return None if text.lower() == "auto" else float(text)
        if key == "net.hidden_sizes":
            if text.lower() == "auto":
                return None
            return tuple(int(v) for v in text.replace(" ", "").split(",") if v)
        if isinstance(default, bool):
            return text.lower() in ("1", "true", "yes", "on")
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
    except ValueError:
        raise ValueError(f"bad value {raw!r} for {key}") from None
    return text


def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"{source}: expected 'section.key = value', got {raw.strip()!r}", line=lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        check_key(key)
        values[key] = value
    return values


def read_config(path) -> dict[str, str]:
    return parse_config_text(Path(path).read_text(), str(path))


def check_key(key: str):
    if key not in KNOWN_KEYS:
        raise KeyError(f"unknown config key {key!r}")


def resolve(file_values: dict | None = None, overrides: dict | None = None,
            seed: int | None = None, env=None) -> tuple[PipelineConfig, dict[str, str]]:
    """Merge the layers into a :class:`PipelineConfig`.

    Returns the config and the fully resolved ``key -> text`` table used by
    ``--print-config``.
    """
    env = os.environ if env is None else env
    values = {k: _default_for(k) for k in KNOWN_KEYS}
    if env.get(SEED_ENV):
        for k in SEED_KEYS:
            values[k] = env[SEED_ENV]
    for layer in (file_values or {}, overrides or {}):
        for k, v in layer.items():
            check_key(k)
            values[k] = str(v)
    if seed is not None:
        for k in SEED_KEYS:
            values[k] = str(seed)

    for k, expected in FIXED.items():
        if values[k].strip().lower() != expected:
            raise ValueError(f"{k} only supports {expected!r}, got {values[k]!r}")
    decimals = int(values["report.decimal_places"])
    if decimals < 0:
        raise ValueError("report.decimal_places must be nonnegative")

    built = {}
    for section, cls in _SECTIONS.items():
        defaults = cls()
        kwargs = {}
        for f in fields(cls):
            if f.name.startswith("_"):
                continue
            key = f"{section}.{f.name}"
            kwargs[f.name] = _coerce(key, values[key], getattr(defaults, f.name))
        built[section] = replace(defaults, **kwargs)

    cfg = PipelineConfig(
        algorithm=values["run.algorithm"].strip(),
        seed=int(values["run.seed"]),
        jobs=int(values["run.jobs"]),
        **built,
    )
    return cfg, {k: values[k] for k in sorted(values)}


def format_config(values: dict[str, str]) -> str:
    return "\n".join(f"{k} = {values[k]}" for k in sorted(values))
