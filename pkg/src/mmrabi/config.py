"""Scenario configuration: schema, per-scenario defaults and precedence.

Every option has a flat name (``mode_count``, ``chi_max``, ``g_grid``) and
belongs to one section: ``model`` (ModelParams), ``evolution``
(EvolutionConfig) or ``scenario`` (scenario-specific knobs). A config file is
JSON, either flat or nested by section. Command-line flags use dashes
(``--mode-count=20``). Precedence is flag > file > scenario default > global
default. Scenario defaults carry a provenance tag: ``reference`` for values taken
from the reference figures and ``desk`` for values scaled down to run on a
laptop.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np

from .errors import ConfigError, MMRabiError
from .model import ModelParams
from .tebd import EvolutionConfig

SCENARIOS = (
    "dynamics", "field-map", "phase-space", "spectrum", "ground-state", "overlap",
    "critical-coupling", "n-sweep", "kerr", "causality", "chain-check",
)

SECTIONS = ("model", "evolution", "scenario")


@dataclass(frozen=True)
class Option:
    section: str
    kind: str  # float | int | str | bool | floats | ints
    help: str = ""
    choices: tuple = ()


OPTIONS = {
    # model
    "omega_x": Option("model", "float", "emitter frequency"),
    "g": Option("model", "float", "coupling rate"),
    "mode_count": Option("model", "int", "number of cavity modes M"),
    "fock_cutoff": Option("model", "int", "local Fock dimension per mode"),
    "emitter_cutoff": Option("model", "int", "local dimension of the emitter"),
    "omega_c": Option("model", "float", "fundamental cavity frequency"),
    "emitter": Option("model", "str", "emitter kind", ("tls", "kerr")),
    "chi": Option("model", "float", "Kerr coefficient"),
    # evolution
    "dt": Option("evolution", "float", "Trotter step"),
    "chi_max": Option("evolution", "int", "maximum bond dimension"),
    "svd_cut": Option("evolution", "float", "relative singular-value cutoff"),
    "t_final": Option("evolution", "float", "final time"),
    "stride": Option("evolution", "int", "steps between measurements"),
    "max_discarded": Option("evolution", "float", "discarded-weight budget"),
    "correlation_stride": Option("evolution", "int", "measurements between correlation samples"),
    # scenario
    "engine": Option("scenario", "str", "dynamics engine", ("mps", "exact", "analytic")),
    "g_grid": Option("scenario", "floats", "coupling grid"),
    "mode_counts": Option("scenario", "ints", "list of mode counts"),
    "auto_cutoff": Option("scenario", "bool", "raise fock_cutoff per point until the tail check passes"),
    "max_cutoff": Option("scenario", "int", "upper bound for auto_cutoff"),
    "initial": Option("scenario", "str", "initial emitter state", ("e", "g", "+", "-")),
    "n_max": Option("scenario", "int", "number of modes drawn in phase space"),
    "samples": Option("scenario", "int", "time samples per roundtrip"),
    "k_levels": Option("scenario", "int", "number of levels"),
    "single_fock_cutoff": Option("scenario", "int", "Fock cutoff of the single-mode reference"),
    "x_points": Option("scenario", "int", "spatial grid points"),
    "t_points": Option("scenario", "int", "time grid points"),
    "field_times": Option("scenario", "floats", "times at which the field map is compared"),
    "threshold": Option("scenario", "float", "front detection threshold (fraction of max)"),
    "roundtrips": Option("scenario", "float", "simulated time in roundtrips"),
    "svg": Option("scenario", "bool", "render SVG figures"),
}

GLOBAL_DEFAULTS = {
    **{k: v for k, v in ModelParams().to_dict().items()},
    **{k: v for k, v in EvolutionConfig().to_dict().items() if k in OPTIONS},
    "svg": True,
}

ROUNDTRIP = 2.0 * math.pi

# TEBD settings that fit a desk budget for M ~ 20 (see the convergence notes in the README)
DESK_TEBD = {
    "dt": (ROUNDTRIP / 1000, "desk", "library default 2*pi/2000"),
    "chi_max": (32, "desk", "library default 64"),
    "svd_cut": (1e-6, "desk", "library default 1e-10"),
}

# (value, provenance, note); provenance is "reference" or "desk"
SCENARIO_DEFAULTS = {
    "dynamics": {
        "g": (0.6, "reference", "cut marked in the population contour"),
        "mode_count": (20, "desk", "reference contour uses M=50"),
        "g_grid": (tuple(np.round(np.linspace(0.0, 1.5, 7), 12)), "desk", "g range [0, 1.5]; grid unstated"),
        "engine": ("mps", "desk", ""),
        "initial": ("e", "reference", "emitter excited, photon vacuum"),
        "auto_cutoff": (True, "desk", ""),
        "max_cutoff": (24, "desk", ""),
        "t_final": (1.1 * ROUNDTRIP, "desk", "time resolution unstated"),
        **DESK_TEBD,
    },
    "field-map": {
        "g": (0.6, "reference", ""),
        "mode_count": (20, "desk", "reference map uses M=50"),
        "engine": ("mps", "desk", ""),
        "initial": ("e", "reference", ""),
        "t_final": (1.1 * ROUNDTRIP, "desk", ""),
        "correlation_stride": (5, "desk", ""),
        "x_points": (401, "desk", ""),
        **DESK_TEBD,
    },
    "phase-space": {
        "g": (0.6, "reference", ""),
        "mode_count": (50, "reference", ""),
        "n_max": (20, "reference", "n <= 20 drawn"),
        "samples": (200, "desk", ""),
    },
    "spectrum": {
        "mode_count": (4, "desk", "mode count and cutoffs unstated"),
        "fock_cutoff": (6, "desk", "cutoff unstated"),
        "g_grid": (tuple(np.round(np.concatenate([[0.02], np.linspace(0.1, 3.0, 30)]), 12)), "desk", ""),
        "k_levels": (5, "reference", "lowest levels"),
        "single_fock_cutoff": (60, "desk", ""),
    },
    "ground-state": {
        "g": (0.6, "reference", ""),
        "mode_count": (20, "desk", "reference cloud uses M=50"),
        "x_points": (401, "desk", ""),
        "chi_max": (32, "desk", "library default 64"),
        "svd_cut": (1e-6, "desk", "library default 1e-10"),
    },
    "overlap": {
        "mode_count": (100, "reference", ""),
        "g_grid": (tuple(np.round(np.linspace(0.1, 1.0, 10), 12)), "reference", "g from 0.1 to 1"),
        "samples": (2000, "desk", ""),
        "roundtrips": (2.0, "desk", ""),
    },
    "critical-coupling": {
        "omega_x": (1.0, "reference", "omega_x = omega_c"),
        "mode_counts": (tuple(range(10, 101, 10)), "reference", "M from 10 to 100"),
    },
    "n-sweep": {
        "g": (0.6, "reference", ""),
        "mode_counts": ((10, 20, 50, 100, 200), "desk", "values of M unstated"),
        "samples": (2000, "desk", ""),
        "roundtrips": (2.0, "desk", ""),
    },
    "kerr": {
        "g": (0.6, "reference", ""),
        "emitter": ("kerr", "reference", ""),
        "chi": (10.0, "reference", ""),
        "mode_count": (10, "desk", ""),
        "emitter_cutoff": (4, "desk", ""),
        "fock_cutoff": (12, "desk", ""),
        "initial": ("e", "reference", "one emitter excitation"),
        "t_final": (1.15 * ROUNDTRIP, "desk", "covers the +-0.1 roundtrip window around the return"),
        "correlation_stride": (1, "desk", ""),
        "x_points": (201, "desk", ""),
        **DESK_TEBD,
        "max_discarded": (2e-2, "desk", "chi_max=32 saturates early; default budget 1e-3"),
    },
    "causality": {
        "g": (0.6, "reference", ""),
        "mode_counts": ((10, 30, 100), "desk", ""),
        "threshold": (0.1, "desk", "1% tracks the sidelobes of the truncated mode sum"),
        "t_points": (300, "desk", ""),
    },
    "chain-check": {
        "mode_count": (50, "reference", ""),
    },
}


@dataclass
class ScenarioSpec:
    scenario: str
    model: ModelParams
    evolution: EvolutionConfig
    options: dict
    out_dir: Path
    provenance: dict = field(default_factory=dict)

    def resolved(self) -> dict:
        return {
            "scenario": self.scenario,
            "model": self.model.to_dict(),
            "evolution": self.evolution.to_dict(),
            "scenario_options": {k: _plain(v) for k, v in sorted(self.options.items())},
        }

    def overrides(self) -> list:
        """Every value not taken from the global defaults, with its source."""
        values = {**self.model.to_dict(), **self.evolution.to_dict(), **self.options}
        out = []
        for key in sorted(self.provenance):
            source, note = self.provenance[key]
            out.append({"key": key, "value": _plain(values.get(key)), "source": source, "note": note})
        return out


def _plain(value):
    if isinstance(value, (tuple, list, np.ndarray)):
        return [_plain(v) for v in value]
    if isinstance(value, np.generic):
        return value.item()
    return value


def _coerce(key: str, raw: Any, key_path: str):
    opt = OPTIONS[key]
    try:
        if opt.kind == "float":
            if isinstance(raw, bool):
                raise TypeError
            value = float(raw)
        elif opt.kind == "int":
            if isinstance(raw, bool) or (isinstance(raw, float) and not raw.is_integer()):
                raise TypeError
            value = int(raw) if not isinstance(raw, str) else int(raw.strip())
        elif opt.kind == "bool":
            if isinstance(raw, bool):
                value = raw
            elif isinstance(raw, str) and raw.lower() in ("1", "true", "yes", "on"):
                value = True
            elif isinstance(raw, str) and raw.lower() in ("0", "false", "no", "off"):
                value = False
            else:
                raise TypeError
        elif opt.kind == "str":
            if not isinstance(raw, str):
                raise TypeError
            value = raw
        else:
            value = _coerce_list(opt.kind, raw)
    except (TypeError, ValueError):
        raise ConfigError(f"expected {opt.kind}, got {raw!r}", key_path) from None
    if opt.choices and value not in opt.choices:
        raise ConfigError(f"must be one of {list(opt.choices)}, got {value!r}", key_path)
    return value


def _coerce_list(kind: str, raw):
    """Lists from JSON arrays, ``a,b,c`` or ``start:stop:count`` (inclusive)."""
    cast = float if kind == "floats" else int
    if isinstance(raw, str):
        text = raw.strip()
        if text.count(":") == 2:
            start, stop, num = text.split(":")
            values = np.linspace(float(start), float(stop), int(num))
            if kind == "ints":
                if not np.allclose(values, np.round(values)):
                    raise ValueError
                return tuple(int(round(v)) for v in values)
            return tuple(float(v) for v in np.round(values, 12))
        items = [s for s in text.split(",") if s.strip()]
    elif isinstance(raw, (list, tuple)):
        items = list(raw)
    else:
        raise TypeError
    if not items:
        raise ValueError
    out = []
    for item in items:
        if isinstance(item, bool):
            raise TypeError
        if cast is int and isinstance(item, float) and not item.is_integer():
            raise TypeError
        out.append(cast(item.strip() if isinstance(item, str) else item))
    return tuple(out)


def load_config_file(path) -> dict:
    """Flat {key: raw value} from a JSON file (flat or nested by section)."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc.strerror}", str(path)) from None
    if not text.strip():
        return {}
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON at line {exc.lineno} column {exc.colno}: {exc.msg}",
                          str(path)) from None
    if not isinstance(data, dict):
        raise ConfigError("top level must be an object", str(path))
    flat = {}
    for key, value in data.items():
        if key in SECTIONS:
            if not isinstance(value, dict):
                raise ConfigError("section must be an object", key)
            for sub, raw in value.items():
                if sub not in OPTIONS:
                    raise ConfigError("unknown key", f"{key}.{sub}")
                if OPTIONS[sub].section != key:
                    raise ConfigError(f"belongs to section {OPTIONS[sub].section!r}", f"{key}.{sub}")
                flat[sub] = (raw, f"{key}.{sub}")
        elif key in OPTIONS:
            flat[key] = (value, key)
        else:
            raise ConfigError("unknown key", key)
    return flat


def parse_flags(flags) -> tuple:
    """Split ``--key=value`` flags into (values, config path, output dir)."""
    values, config_path, out_dir = {}, None, None
    for flag in flags:
        if not flag.startswith("--"):
            raise ConfigError(f"unexpected argument {flag!r}; expected --key=value")
        body = flag[2:]
        if "=" in body:
            name, raw = body.split("=", 1)
        else:
            name, raw = body, "true"
        key = name.replace("-", "_")
        if key == "config":
            config_path = raw
        elif key == "out":
            out_dir = raw
        elif key in OPTIONS:
            values[key] = (raw, f"--{name}")
        else:
            raise ConfigError("unknown key", f"--{name}")
    return values, config_path, out_dir


def build_spec(scenario: str, file_values: Optional[dict] = None, flag_values: Optional[dict] = None,
               out_dir=None) -> ScenarioSpec:
    if scenario not in SCENARIOS:
        raise ConfigError(f"unknown scenario {scenario!r}; choose from {', '.join(SCENARIOS)}", "scenario")
    values = dict(GLOBAL_DEFAULTS)
    provenance = {}
    for key, (value, source, note) in SCENARIO_DEFAULTS[scenario].items():
        values[key] = value
        provenance[key] = (source, note)
    for layer, source in ((file_values or {}, "file"), (flag_values or {}, "flag")):
        for key, (raw, path) in layer.items():
            values[key] = _coerce(key, raw, path)
            provenance[key] = (source, path)

    model_keys = [k for k, o in OPTIONS.items() if o.section == "model"]
    evo_keys = [k for k, o in OPTIONS.items() if o.section == "evolution"]
    model_data = {k: values[k] for k in model_keys}
    if model_data["emitter"] == "kerr" and "emitter_cutoff" not in provenance:
        model_data["emitter_cutoff"] = 4
    if model_data["emitter"] == "tls" and model_data["chi"] != 0.0:
        raise ConfigError("chi is only meaningful for emitter=kerr", "chi")
    try:
        model = ModelParams.from_dict(model_data)
    except MMRabiError as exc:
        raise ConfigError(str(exc), _path_of(exc, provenance)) from None
    try:
        evolution = EvolutionConfig(**{k: values[k] for k in evo_keys})
    except MMRabiError as exc:
        raise ConfigError(str(exc), _path_of(exc, provenance)) from None
    options = {k: values[k] for k, o in OPTIONS.items() if o.section == "scenario" and k in values}
    _check_options(options)
    return ScenarioSpec(scenario, model, evolution, options, Path(out_dir or f"out/{scenario}"), provenance)


def _path_of(exc, provenance) -> str:
    # name the first user-supplied key mentioned in the message
    text = str(exc)
    for key, (source, note) in provenance.items():
        if source in ("file", "flag") and key in text:
            return note
    return "model"


def _check_options(options: dict) -> None:
    for key in ("n_max", "samples", "k_levels", "x_points", "t_points", "max_cutoff", "single_fock_cutoff"):
        if key in options and options[key] < 1:
            raise ConfigError("must be >= 1", key)
    for key in ("mode_counts",):
        if key in options and min(options[key]) < 1:
            raise ConfigError("every entry must be >= 1", key)
    if "g_grid" in options and min(options["g_grid"]) < 0:
        raise ConfigError("every entry must be >= 0", "g_grid")
    if "roundtrips" in options and options["roundtrips"] <= 0:
        raise ConfigError("must be > 0", "roundtrips")
    if "threshold" in options and not 0 < options["threshold"] < 1:
        raise ConfigError("must lie in (0, 1)", "threshold")


def parse_config(scenario: str, flags=(), config_path=None, out_dir=None) -> ScenarioSpec:
    """Resolve a ScenarioSpec from an optional JSON file and ``--key=value`` flags."""
    flag_values, flag_config, flag_out = parse_flags(flags)
    path = flag_config or config_path
    file_values = load_config_file(path) if path else {}
    return build_spec(scenario, file_values, flag_values, flag_out or out_dir)


def schema_text() -> str:
    lines = []
    for section in SECTIONS:
        lines.append(f"[{section}]")
        for key, opt in OPTIONS.items():
            if opt.section == section:
                extra = f" one of {', '.join(opt.choices)}" if opt.choices else ""
                lines.append(f"  --{key.replace('_', '-')}=<{opt.kind}>  {opt.help}{extra}")
    return "\n".join(lines)
