"""Run-configuration schema and loading."""
from __future__ import annotations

import json
from pathlib import Path

import jsonschema

from .exceptions import ConfigError

_POS = {"type": "number", "exclusiveMinimum": 0}
_NONNEG = {"type": "number", "minimum": 0}


def _obj(props: dict, required=()):
    return {"type": "object", "properties": props, "required": list(required),
            "additionalProperties": False}


VDP = _obj({"mu": _POS, "amp": _POS, "omega0_sq": _POS, "gain": {"type": "number"},
            "forcing_kind": {"enum": ["displacement", "velocity", "acceleration"]},
            "ic": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}},
           required=("mu", "amp", "omega0_sq"))

SCHEMA = _obj({
    "beam": _obj({"E": _POS, "A": _POS, "I": _POS, "J": _POS, "rho": _POS, "length": _POS,
                  "tension": _NONNEG, "D": _POS,
                  "n_elements": {"type": "integer", "minimum": 2},
                  "boundary": {"enum": ["pinned", "cantilever"]},
                  "rayleigh_a": _NONNEG, "rayleigh_b": _NONNEG}),
    "hydro": _obj({"rho_f": _POS, "U": _NONNEG, "D": _POS,
                   "St": {"type": "number", "exclusiveMinimum": 0.05, "exclusiveMaximum": 0.5}}),
    "vdp": VDP,
    "ssmodel": {"type": "string", "minLength": 1},
    "coupling": _obj({"tol": _POS, "omega0": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                      "max_subiter": {"type": "integer", "minimum": 1}, "dt": _POS, "T": _POS,
                      "dcm": {"type": "number"}}),
    "synth": _obj({
        "dt": _POS, "T": _POS, "spinup": _NONNEG,
        "noise": {"type": "number", "minimum": 0, "maximum": 10},
        "inline_forcing": {"enum": ["lc2", "lc_lcdot"]},
        "motion": _obj({"kind": {"enum": ["multisine", "sine", "none"]},
                        "tones": {"type": "integer", "minimum": 1}, "center": _POS,
                        "spread": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
                        "acc_rms": _POS, "amplitude": _NONNEG}),
    }),
    "identify": _obj({
        "variant": {"enum": ["all", "displacement", "velocity", "acceleration", "lc2", "lc_lcdot"]},
        "p0": VDP,
        "rel_threshold": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "holdout": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
    }),
})


def _pointer(path) -> str:
    return "".join(f"/{p}" for p in path)


def validate(cfg) -> dict:
    """Check ``cfg`` against the schema; the first violation raises ConfigError with its pointer."""
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(cfg), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        path = list(e.absolute_path)
        if e.validator == "additionalProperties":
            extra = sorted(set(e.instance) - set(e.schema.get("properties", {})))
            if extra:
                path.append(extra[0])
                raise ConfigError(f"unknown key {extra[0]!r}", _pointer(path))
        raise ConfigError(e.message, _pointer(path))
    return cfg


def load(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON at line {exc.lineno}: {exc.msg}") from None
    return validate(cfg)


def require(cfg: dict, *sections):
    missing = [s for s in sections if s not in cfg]
    if missing:
        raise ConfigError(f"missing section {missing[0]!r}", "")
