"""``key = value`` configuration files for the pipeline, field and noise models.

Blank lines and ``#`` comments are ignored.  Unknown keys produce a warning;
missing keys keep their defaults.  ``seed`` drives both the field layout and
the sensor noise.  ``row_spacing`` sets the field geometry and the MRF search
scale together.
"""

from __future__ import annotations

import dataclasses
import logging
from typing import Any

from .evaluation import parse_mask
from .factors import WeightParams
from .pipeline import PipelineConfig
from .sim import FieldConfig, NoiseConfig
from .solver import SolverConfig

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    pass


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: '{s}'")


def _pair(s: str) -> tuple:
    vals = tuple(float(v) for v in s.replace(",", " ").split())
    if len(vals) != 2:
        raise ValueError(f"expected two numbers, got '{s}'")
    return vals


def _outages(s: str) -> tuple:
    out = []
    for item in s.split(";"):
        if not item.strip():
            continue
        a, b, mode = [p.strip() for p in item.split(",")]
        out.append((float(a), float(b), mode.upper()))
    return tuple(out)


def _optional_float(s: str):
    return None if s.strip().lower() in ("", "none", "auto") else float(s)


def _parser_for(cls) -> dict:
    conv = {}
    for f in dataclasses.fields(cls):
        if f.type in ("int", int):
            conv[f.name] = int
        elif f.type in ("float", float):
            conv[f.name] = float
        elif f.type in ("bool", bool):
            conv[f.name] = _bool
        elif f.type in ("str", str):
            conv[f.name] = str
    return conv


_SECTIONS = {
    "pipeline": (PipelineConfig, {**_parser_for(PipelineConfig), "cues": parse_mask,
                                  "mrf_radius": _optional_float, "anchor": str}),
    "weights": (WeightParams, _parser_for(WeightParams)),
    "solver": (SolverConfig, _parser_for(SolverConfig)),
    "field": (FieldConfig, {**_parser_for(FieldConfig), "wavelengths": _pair, "slope": _pair,
                            "mode": lambda s: s.strip().upper()}),
    "noise": (NoiseConfig, {**_parser_for(NoiseConfig), "outages": _outages,
                            "gps_mode": lambda s: s.strip().upper()}),
}
# keys the pipeline owns that also exist elsewhere go to one place only
_SKIP = {("pipeline", "weights"), ("pipeline", "solver"), ("field", "seed"), ("noise", "seed"),
         ("pipeline", "row_spacing"), ("field", "row_spacing")}


def _key_table() -> dict:
    table = {}
    for section, (_, conv) in _SECTIONS.items():
        for key, fn in conv.items():
            if (section, key) in _SKIP:
                continue
            if key in table:
                raise RuntimeError(f"config key '{key}' is ambiguous")
            table[key] = (section, fn)
    table["seed"] = ("shared", int)
    table["row_spacing"] = ("shared", float)
    return table


KEYS = _key_table()


def parse_config(text: str, source: str = "<config>"):
    """Parse config text into ``(PipelineConfig, FieldConfig, NoiseConfig)``."""
    values: dict[str, dict[str, Any]] = {s: {} for s in (*_SECTIONS, "shared")}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, val = (p.strip() for p in line.split("=", 1))
        if key not in KEYS:
            log.warning("%s:%d: unknown key '%s' ignored", source, lineno, key)
            continue
        section, fn = KEYS[key]
        try:
            values[section][key] = fn(val)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for '{key}': {exc}") from None
    shared = values["shared"]
    if "seed" in shared:
        values["field"]["seed"] = values["noise"]["seed"] = shared["seed"]
    if "row_spacing" in shared:
        values["field"]["row_spacing"] = values["pipeline"]["row_spacing"] = shared["row_spacing"]
    try:
        weights = WeightParams(**values["weights"])
        solver = SolverConfig(**values["solver"])
        pipe = PipelineConfig(weights=weights, solver=solver, **values["pipeline"])
        field_cfg = FieldConfig(**values["field"])
        noise = NoiseConfig(**values["noise"])
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{source}: {exc}") from None
    return pipe, field_cfg, noise


def load_config(path):
    with open(path) as fh:
        return parse_config(fh.read(), str(path))


def describe_keys() -> str:
    """Every key with its default, one per line, for ``--help`` output."""
    defaults = {
        "pipeline": PipelineConfig(), "weights": WeightParams(), "solver": SolverConfig(),
        "field": FieldConfig(), "noise": NoiseConfig(),
    }
    lines = []
    for key in sorted(KEYS):
        section, _ = KEYS[key]
        if section == "shared":
            default = getattr(defaults["field"], key)
        else:
            default = getattr(defaults[section], key)
        if key == "cues":
            default = "ALL"
        elif key == "outages":
            default = "none (t_start,t_end,MODE; ...)"
        elif default is None:
            default = "auto"
        elif isinstance(default, tuple):
            default = " ".join(str(v) for v in default)
        elif hasattr(default, "value"):
            default = default.value
        lines.append(f"  {key} = {default}")
    return "\n".join(lines)
