"""Key-value configuration files with units encoded in key names.

Format::

    # comment
    [atom]
    preset = rb87-d2

    [design.row1]
    length_mm = 2.075
    roc2_mm = 100
    t1_ppm = 100

Every dimensional key ends in a unit suffix (``length_mm``,
``seal_pressure_mbar``, ``seal_temperature_c``...). Any unit of the right
dimension is accepted and converted to SI at parse time; a unit of the
wrong dimension or an unknown key is an error reported with its line
number. All problems in a file are collected before raising.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

from .cqed import AtomSpec, CavityDesign, MirrorSpec, linewidth_from_finesse
from .errors import DomainError
from .optics import FLAT
from .reflow import AnnealProfile, ReflowRecipe

# unit -> (dimension, scale, offset); SI value = raw * scale + offset
UNITS = {
    "m": ("length", 1.0, 0.0),
    "mm": ("length", 1e-3, 0.0),
    "um": ("length", 1e-6, 0.0),
    "nm": ("length", 1e-9, 0.0),
    "pa": ("pressure", 1.0, 0.0),
    "kpa": ("pressure", 1e3, 0.0),
    "mbar": ("pressure", 100.0, 0.0),
    "bar": ("pressure", 1e5, 0.0),
    "k": ("temperature", 1.0, 0.0),
    "c": ("temperature", 1.0, 273.15),
    "hz": ("frequency", 1.0, 0.0),
    "khz": ("frequency", 1e3, 0.0),
    "mhz": ("frequency", 1e6, 0.0),
    "ghz": ("frequency", 1e9, 0.0),
    "frac": ("fraction", 1.0, 0.0),
    "pct": ("fraction", 1e-2, 0.0),
    "ppm": ("fraction", 1e-6, 0.0),
    "rad_per_s": ("angular_rate", 1.0, 0.0),
    "mhz_2pi": ("angular_rate", 2 * math.pi * 1e6, 0.0),
    "n_per_m": ("tension", 1.0, 0.0),
    "mn_per_m": ("tension", 1e-3, 0.0),
    "k_per_s": ("ramp", 1.0, 0.0),
    "c_per_min": ("ramp", 1.0 / 60.0, 0.0),
    "s": ("time", 1.0, 0.0),
    "min": ("time", 60.0, 0.0),
    "h": ("time", 3600.0, 0.0),
    # recognised only to report mismatches clearly
    "kg": ("mass", 1.0, 0.0),
    "g": ("mass", 1e-3, 0.0),
    "v": ("voltage", 1.0, 0.0),
    "w": ("power", 1.0, 0.0),
}
SI_UNIT = {"length": "m", "pressure": "pa", "temperature": "k", "frequency": "hz",
           "fraction": "frac", "angular_rate": "rad_per_s", "tension": "n_per_m",
           "ramp": "k_per_s", "time": "s"}

INT, FLOAT, STR = "int", "float", "str"

SCHEMA = {
    "atom": {"preset": STR, "wavelength": "length", "dipole_decay": "angular_rate"},
    "design": {
        "length": "length", "roc1": "length", "roc2": "length",
        "t1": "fraction", "t2": "fraction", "loss1": "fraction", "loss2": "fraction",
        "wavelength": "length", "length_unc": "length", "roc_unc": "length",
        "linewidth": "frequency", "linewidth_rel_unc": "fraction", "finesse": FLOAT,
    },
    "reflow": {
        "hole_radius": "length", "hole_diameter": "length", "hole_depth": "length",
        "seal_pressure": "pressure", "seal_temperature": "temperature",
        "forming_pressure": "pressure", "forming_temperature": "temperature",
        "membrane_tension": "tension", "tension_factor": FLOAT,
        "coverslip_thickness": "length",
        "sweep_hole_diameter": "length", "sweep_forming_pressure": "pressure",
    },
    "schedule": {
        "ambient_temperature": "temperature", "heating_rate": "ramp",
        "pressurize_time": "time", "forming_hold": "time",
        "annealing_point": "temperature", "anneal_cooling_rate": "ramp",
        "anneal_hold": "time", "strain_point": "temperature",
        "strain_cooling_rate": "ramp", "max_cooling_rate": "ramp",
    },
    "metrology": {"noise_floor": "length", "sag_factor": FLOAT,
                  "artifact_threshold": FLOAT, "degree": INT, "wavelength": "length"},
    "instrument": {"f_mod": "frequency", "f_mod_factor": FLOAT, "depth": FLOAT,
                   "noise": FLOAT, "slope": "frequency", "samples": INT,
                   "probe_waist": "length", "probe_wavelength": "length",
                   "position_noise": "length"},
}
LIST_KEYS = {("reflow", "sweep_hole_diameter"), ("reflow", "sweep_forming_pressure")}
FLAT_KEYS = {("design", "roc1"), ("design", "roc2")}

ATOM_PRESETS = {
    # 87Rb D2 line; dipole decay gamma = (2 pi * 6.06 MHz) / 2
    "rb87-d2": AtomSpec(780e-9, 2 * math.pi * 3.03e6),
}
DEFAULT_ATOM = "rb87-d2"


@dataclass(frozen=True)
class ConfigIssue:
    line: int
    message: str

    def __str__(self):
        return f"line {self.line}: {self.message}" if self.line else self.message


class ConfigError(ValueError):
    def __init__(self, issues, path=None):
        self.issues = sorted(issues, key=lambda i: i.line)
        self.path = path
        prefix = f"{path}: " if path else ""
        super().__init__("\n".join(prefix + str(i) for i in self.issues))


@dataclass(frozen=True)
class DesignEntry:
    """A cavity design plus its measured linewidth, if any."""

    design: CavityDesign
    linewidth: Optional[float] = None
    linewidth_rel_unc: float = 0.0

    @property
    def name(self):
        return self.design.name


@dataclass(frozen=True)
class MetrologySettings:
    noise_floor: float = 0.3e-9
    sag_factor: float = 10.0
    artifact_threshold: float = 0.25
    degree: int = 6
    wavelength: float = 780e-9


@dataclass(frozen=True)
class InstrumentSettings:
    """Defaults for the simulated bench. ``f_mod`` None means ``f_mod_factor * linewidth``."""

    f_mod: Optional[float] = None
    f_mod_factor: float = 5.0
    depth: float = 0.25
    noise: float = 0.01
    slope: float = 1e6
    samples: int = 2001
    probe_waist: float = 2e-6
    probe_wavelength: float = 780e-9
    position_noise: float = 0.0


@dataclass(frozen=True)
class ToolConfig:
    designs: tuple[DesignEntry, ...] = ()
    atom: AtomSpec = ATOM_PRESETS[DEFAULT_ATOM]
    atom_preset: Optional[str] = DEFAULT_ATOM
    reflow: Optional[ReflowRecipe] = None
    sweep_hole_radii: tuple[float, ...] = ()
    sweep_forming_pressures: tuple[float, ...] = ()
    anneal: AnnealProfile = field(default_factory=AnnealProfile)
    metrology: MetrologySettings = field(default_factory=MetrologySettings)
    instrument: InstrumentSettings = field(default_factory=InstrumentSettings)


def split_key(key: str):
    """Return ``(base, unit)``; ``unit`` is None when no known suffix is present."""
    best = None
    for unit in UNITS:
        if key.endswith("_" + unit) and len(key) > len(unit) + 1:
            if best is None or len(unit) > len(best):
                best = unit
    if best is None:
        return key, None
    return key[: -len(best) - 1], best


def _convert(raw: str, unit: str) -> float:
    _, scale, offset = UNITS[unit]
    return float(raw) * scale + offset


def _lex(text: str):
    """Yield ``(lineno, section_or_None, key, value)``; section lines have key None."""
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if stripped.startswith("["):
            if not stripped.endswith("]"):
                yield lineno, "!", stripped, None
            else:
                yield lineno, stripped[1:-1].strip(), None, None
            continue
        if "=" not in stripped:
            yield lineno, "!", stripped, None
            continue
        key, value = stripped.split("=", 1)
        yield lineno, None, key.strip().lower(), value.strip()


def parse_text(text: str, path=None) -> ToolConfig:
    """Parse configuration text. Raises :class:`ConfigError` listing every problem."""
    issues = []
    sections = []  # (kind, name, header_line, {base: (value, lineno)})
    current = None
    for lineno, section, key, value in _lex(text):
        if section == "!":
            issues.append(ConfigIssue(lineno, f"cannot parse line {key!r}"))
            continue
        if section is not None:
            kind, _, name = section.partition(".")
            kind = kind.strip().lower()
            if kind not in SCHEMA:
                issues.append(ConfigIssue(lineno, f"unknown section [{section}]"))
                current = None
                continue
            if kind == "design" and not name.strip():
                issues.append(ConfigIssue(lineno, "design sections need a name: [design.<name>]"))
            elif kind != "design" and name:
                issues.append(ConfigIssue(lineno, f"section [{kind}] takes no name"))
            if kind != "design" and any(s[0] == kind for s in sections):
                issues.append(ConfigIssue(lineno, f"duplicate section [{kind}]"))
            current = (kind, name.strip(), lineno, {})
            sections.append(current)
            continue
        if current is None:
            issues.append(ConfigIssue(lineno, f"key {key!r} outside any known section"))
            continue
        kind, _, _, values = current
        schema = SCHEMA[kind]
        base, unit = split_key(key)
        if unit is None and (kind, key) in FLAT_KEYS and value.lower() == "flat":
            dim = schema[key]
        elif unit is None:
            if key not in schema:
                suffix = key.rsplit("_", 1)
                if len(suffix) == 2 and suffix[0] in schema and schema[suffix[0]] not in (INT, FLOAT, STR):
                    issues.append(ConfigIssue(lineno, f"unknown unit {suffix[1]!r} in key {key!r}"))
                elif key in {b for b, d in schema.items() if d not in (INT, FLOAT, STR)}:
                    issues.append(ConfigIssue(
                        lineno, f"key {key!r} needs a unit suffix, e.g. {key}_{SI_UNIT[schema[key]]}"))
                else:
                    issues.append(ConfigIssue(lineno, f"unknown key {key!r} in [{kind}]"))
                continue
            base, dim = key, schema[key]
            if dim not in (INT, FLOAT, STR):
                issues.append(ConfigIssue(lineno, f"key {key!r} needs a unit suffix"))
                continue
        else:
            if base not in schema:
                if key in schema:
                    base, unit = key, None
                else:
                    issues.append(ConfigIssue(lineno, f"unknown key {key!r} in [{kind}]"))
                    continue
            dim = schema[base]
            if unit is not None:
                unit_dim = UNITS[unit][0]
                if dim in (INT, FLOAT, STR):
                    issues.append(ConfigIssue(lineno, f"key {base!r} is dimensionless; drop the unit {unit!r}"))
                    continue
                if unit_dim != dim:
                    issues.append(ConfigIssue(
                        lineno, f"unit mismatch in {key!r}: {unit!r} is a {unit_dim} unit, "
                                f"{base!r} expects a {dim}"))
                    continue
        if base in values:
            issues.append(ConfigIssue(lineno, f"duplicate key {base!r} (first on line {values[base][1]})"))
            continue
        try:
            values[base] = (_value(kind, base, dim, unit, value), lineno)
        except ValueError as exc:
            issues.append(ConfigIssue(lineno, f"{key}: {exc}"))

    cfg = _build(sections, issues)
    if issues:
        raise ConfigError(issues, path)
    return cfg


def _value(kind, base, dim, unit, raw):
    if (kind, base) in LIST_KEYS:
        items = [r.strip() for r in raw.split(",") if r.strip()]
        if not items:
            raise ValueError("empty list")
        return tuple(_convert(r, unit) for r in items)
    if (kind, base) in FLAT_KEYS and raw.lower() == "flat":
        return FLAT
    if dim == STR:
        return raw
    if dim == INT:
        return int(raw)
    if dim == FLOAT:
        v = float(raw)
    else:
        v = _convert(raw, unit)
    if not math.isfinite(v):
        raise ValueError(f"non-finite value {raw!r}")
    return v


def _get(values, key, default=None):
    return values[key][0] if key in values else default


def _build(sections, issues) -> ToolConfig:
    cfg = ToolConfig()
    by_kind = {}
    for kind, name, line, values in sections:
        by_kind.setdefault(kind, []).append((name, line, values))

    atom = cfg.atom
    preset = cfg.atom_preset
    for _, line, values in by_kind.get("atom", []):
        if "preset" in values:
            preset = values["preset"][0]
            if preset not in ATOM_PRESETS:
                issues.append(ConfigIssue(values["preset"][1],
                                          f"unknown atom preset {preset!r}; known: {sorted(ATOM_PRESETS)}"))
                preset = DEFAULT_ATOM
            atom = ATOM_PRESETS[preset]
        if "wavelength" in values or "dipole_decay" in values:
            try:
                atom = AtomSpec(_get(values, "wavelength", atom.wavelength),
                                _get(values, "dipole_decay", atom.dipole_decay))
                if atom != ATOM_PRESETS.get(preset):
                    preset = None
            except DomainError as exc:
                issues.append(ConfigIssue(line, str(exc)))

    designs = []
    seen = {}
    for name, line, values in by_kind.get("design", []):
        if name in seen:
            issues.append(ConfigIssue(line, f"duplicate design {name!r} (first on line {seen[name]})"))
            continue
        seen[name] = line
        entry = _design(name, line, values, atom, issues)
        if entry is not None:
            designs.append(entry)

    reflow = None
    radii, pressures = (), ()
    for _, line, values in by_kind.get("reflow", []):
        kw = {}
        if "hole_radius" in values and "hole_diameter" in values:
            issues.append(ConfigIssue(line, "give hole_radius or hole_diameter, not both"))
        if "hole_diameter" in values:
            kw["hole_radius"] = values["hole_diameter"][0] / 2.0
        for f in fields(ReflowRecipe):
            if f.name in values:
                kw[f.name] = values[f.name][0]
        try:
            reflow = ReflowRecipe(**kw)
        except DomainError as exc:
            issues.append(ConfigIssue(line, f"[reflow]: {exc}"))
        radii = tuple(d / 2.0 for d in _get(values, "sweep_hole_diameter", ()))
        pressures = tuple(_get(values, "sweep_forming_pressure", ()))

    anneal = cfg.anneal
    for _, line, values in by_kind.get("schedule", []):
        anneal = replace(anneal, **{k: v for k, (v, _) in values.items()})

    metrology = cfg.metrology
    for _, line, values in by_kind.get("metrology", []):
        metrology = replace(metrology, **{k: v for k, (v, _) in values.items()})
        if metrology.degree < 1:
            issues.append(ConfigIssue(values.get("degree", (0, line))[1], "degree must be >= 1"))

    instrument = cfg.instrument
    for _, line, values in by_kind.get("instrument", []):
        instrument = replace(instrument, **{k: v for k, (v, _) in values.items()})

    return ToolConfig(tuple(designs), atom, preset, reflow, radii, pressures,
                      anneal, metrology, instrument)


def _design(name, line, values, atom, issues) -> Optional[DesignEntry]:
    missing = [k for k in ("length", "roc2") if k not in values]
    if missing:
        issues.append(ConfigIssue(line, f"[design.{name}] is missing {', '.join(missing)}"))
        return None
    if "linewidth" in values and "finesse" in values:
        issues.append(ConfigIssue(line, f"[design.{name}]: give linewidth or finesse, not both"))
        return None
    try:
        m1 = MirrorSpec(_get(values, "roc1", FLAT), _get(values, "t1", 0.0), _get(values, "loss1", 0.0))
        m2 = MirrorSpec(values["roc2"][0], _get(values, "t2", 0.0), _get(values, "loss2", 0.0))
        length = values["length"][0]
        design = CavityDesign(length, m1, m2, _get(values, "wavelength", atom.wavelength),
                              _get(values, "length_unc", 0.0), _get(values, "roc_unc", 0.0), name)
        linewidth = _get(values, "linewidth")
        if "finesse" in values:
            linewidth = linewidth_from_finesse(length, values["finesse"][0])
        rel = _get(values, "linewidth_rel_unc", 0.0)
        if rel < 0:
            raise DomainError("linewidth_rel_unc must be non-negative")
        if linewidth is not None and not linewidth > 0:
            raise DomainError("linewidth must be positive")
    except DomainError as exc:
        issues.append(ConfigIssue(line, f"[design.{name}]: {exc}"))
        return None
    return DesignEntry(design, linewidth, rel)


def parse_config(path) -> ToolConfig:
    """Read and validate a configuration file."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigError([ConfigIssue(0, f"configuration file not found: {path}")]) from None
    except UnicodeDecodeError as exc:
        raise ConfigError([ConfigIssue(0, f"{path} is not valid UTF-8: {exc}")]) from None
    return parse_text(text, path)


# -- serialisation ------------------------------------------------------------

def _fmt(v):
    if v is FLAT:
        return "flat"
    if isinstance(v, float):
        return repr(float(v))
    return str(v)


def _si_line(base, dim, v):
    if dim in (INT, FLOAT, STR):
        return f"{base} = {_fmt(v)}"
    return f"{base}_{SI_UNIT[dim]} = {_fmt(v)}"


def format_config(cfg: ToolConfig) -> str:
    """Serialise to the file format using SI units, so reparsing is exact."""
    out = []
    out.append("[atom]")
    if cfg.atom_preset is not None and ATOM_PRESETS.get(cfg.atom_preset) == cfg.atom:
        out.append(f"preset = {cfg.atom_preset}")
    else:
        out.append(_si_line("wavelength", "length", cfg.atom.wavelength))
        out.append(_si_line("dipole_decay", "angular_rate", cfg.atom.dipole_decay))
    for e in cfg.designs:
        d = e.design
        out.append("")
        out.append(f"[design.{d.name}]")
        out.append(_si_line("length", "length", d.length))
        out.append(f"roc1_m = {_fmt(d.mirror_1.roc)}")
        out.append(f"roc2_m = {_fmt(d.mirror_2.roc)}")
        out.append(_si_line("t1", "fraction", d.mirror_1.transmission))
        out.append(_si_line("t2", "fraction", d.mirror_2.transmission))
        out.append(_si_line("loss1", "fraction", d.mirror_1.excess_loss))
        out.append(_si_line("loss2", "fraction", d.mirror_2.excess_loss))
        out.append(_si_line("wavelength", "length", d.wavelength))
        out.append(_si_line("length_unc", "length", d.length_uncertainty))
        out.append(_si_line("roc_unc", "length", d.roc_uncertainty))
        if e.linewidth is not None:
            out.append(_si_line("linewidth", "frequency", e.linewidth))
        out.append(_si_line("linewidth_rel_unc", "fraction", e.linewidth_rel_unc))
    if cfg.reflow is not None:
        out.append("")
        out.append("[reflow]")
        for f in fields(ReflowRecipe):
            out.append(_si_line(f.name, SCHEMA["reflow"][f.name], getattr(cfg.reflow, f.name)))
        if cfg.sweep_hole_radii:
            out.append("sweep_hole_diameter_m = " + ", ".join(repr(2 * float(r)) for r in cfg.sweep_hole_radii))
        if cfg.sweep_forming_pressures:
            out.append("sweep_forming_pressure_pa = "
                       + ", ".join(repr(float(p)) for p in cfg.sweep_forming_pressures))
    for section, obj in (("schedule", cfg.anneal), ("metrology", cfg.metrology),
                         ("instrument", cfg.instrument)):
        out.append("")
        out.append(f"[{section}]")
        for f in fields(obj):
            v = getattr(obj, f.name)
            if v is None:
                continue
            out.append(_si_line(f.name, SCHEMA[section][f.name], v))
    return "\n".join(out) + "\n"
