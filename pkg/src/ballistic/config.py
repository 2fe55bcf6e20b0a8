"""Experiment configuration: a sectioned ``key = value`` text format.

Files are read with :mod:`configparser` (comments with ``#`` or ``;``).  Every
key has a default, so a config only needs to state what differs.  Unknown
sections or keys are rejected so typos cannot silently fall back to defaults.

Schema (defaults shown)::

    [run]
    name = experiment
    stages = dynamics              ; any of: dynamics, spectral
    seed = 0

    [geometry]
    d = 1
    L = 256

    [potential]
    family = zero                  ; zero | power_law | wigner_von_neumann | anderson | periodic
    c = 1.0
    alpha = 2.0
    k = 1.0
    lam = 0.0
    seed = 0
    pattern =                      ; comma list, periodic family only

    [initial]
    kind = delta                   ; delta | gaussian | file
    center =                       ; comma list of d integers/reals (origin)
    width = 4.0
    momentum =                     ; pi/2 per axis when empty
    path =                         ; state CSV, relative to the config file

    [times]
    count = 120
    t_min = 1.0
    t_max =                        ; light-cone horizon when empty
    spacing = geometric            ; geometric | linear
    include_zero = true
    safety = 0.9

    [moments]
    orders = 0.5, 1, 2
    ball_radii = 5, 25

    [fit]
    window =                       ; "lo, hi"; 10, 0.8 * t_max when empty
    tol = 0.05

    [propagator]
    tau =                          ; half_width * tau = 20 when empty
    tolerance = 1e-14

    [spectral]
    L =                            ; dense box radius; geometry L when empty
    theta = 1.0
    e0 = 0.0
    deltas = 0.125, 0.25, 0.5, 1, 2
    ipr_threshold = 0.05
    boundary_threshold = 0.05

    [expect]                       ; every key optional; empty = not asserted
    slope_min =
    slope_max =
    slope_order = 1
    ratio_band_max =
    ball_radius = 25
    ball_sup_min =
    min_rayleigh_min =
    certified_bound_min =
    order1_envelope = true

    [output]
    dir =
"""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from .operators import DENSE_CAP
from .potentials import FAMILIES, PotentialSpec

STAGES = ("dynamics", "spectral")
INITIAL_KINDS = ("delta", "gaussian", "file")
SPACINGS = ("geometric", "linear")


class ConfigError(ValueError):
    """Invalid configuration, with the offending ``section.key`` and line if known."""

    def __init__(self, message: str, field: str = "", line: Optional[int] = None, source: str = ""):
        self.message = message
        self.field = field
        self.line = line
        self.source = source
        super().__init__(self.describe())

    def describe(self) -> str:
        where = self.source or "<config>"
        if self.line is not None:
            where += f":{self.line}"
        if self.field:
            where += f" [{self.field}]"
        return f"{where}: {self.message}"


# -- schema -------------------------------------------------------------------


@dataclass(frozen=True)
class RunSection:
    name: str = "experiment"
    stages: Tuple[str, ...] = ("dynamics",)
    seed: int = 0


@dataclass(frozen=True)
class GeometrySection:
    d: int = 1
    L: int = 256


@dataclass(frozen=True)
class InitialSection:
    kind: str = "delta"
    center: Tuple[float, ...] = ()
    width: float = 4.0
    momentum: Tuple[float, ...] = ()
    path: str = ""


@dataclass(frozen=True)
class TimesSection:
    count: int = 120
    t_min: float = 1.0
    t_max: Optional[float] = None
    spacing: str = "geometric"
    include_zero: bool = True
    safety: float = 0.9


@dataclass(frozen=True)
class MomentsSection:
    orders: Tuple[float, ...] = (0.5, 1.0, 2.0)
    ball_radii: Tuple[float, ...] = (5.0, 25.0)


@dataclass(frozen=True)
class FitSection:
    window: Optional[Tuple[float, float]] = None
    tol: float = 0.05


@dataclass(frozen=True)
class PropagatorSection:
    tau: Optional[float] = None
    tolerance: float = 1e-14


@dataclass(frozen=True)
class SpectralSection:
    L: Optional[int] = None
    theta: float = 1.0
    e0: float = 0.0
    deltas: Tuple[float, ...] = (0.125, 0.25, 0.5, 1.0, 2.0)
    ipr_threshold: float = 0.05
    boundary_threshold: float = 0.05


@dataclass(frozen=True)
class ExpectSection:
    slope_min: Optional[float] = None
    slope_max: Optional[float] = None
    slope_order: float = 1.0
    ratio_band_max: Optional[float] = None
    ball_radius: float = 25.0
    ball_sup_min: Optional[float] = None
    min_rayleigh_min: Optional[float] = None
    certified_bound_min: Optional[float] = None
    order1_envelope: bool = True


@dataclass(frozen=True)
class OutputSection:
    dir: str = ""


SECTIONS = {
    "run": RunSection,
    "geometry": GeometrySection,
    "potential": PotentialSpec,
    "initial": InitialSection,
    "times": TimesSection,
    "moments": MomentsSection,
    "fit": FitSection,
    "propagator": PropagatorSection,
    "spectral": SpectralSection,
    "expect": ExpectSection,
    "output": OutputSection,
}


@dataclass(frozen=True)
class ExperimentConfig:
    run: RunSection = field(default_factory=RunSection)
    geometry: GeometrySection = field(default_factory=GeometrySection)
    potential: PotentialSpec = field(default_factory=PotentialSpec)
    initial: InitialSection = field(default_factory=InitialSection)
    times: TimesSection = field(default_factory=TimesSection)
    moments: MomentsSection = field(default_factory=MomentsSection)
    fit: FitSection = field(default_factory=FitSection)
    propagator: PropagatorSection = field(default_factory=PropagatorSection)
    spectral: SpectralSection = field(default_factory=SpectralSection)
    expect: ExpectSection = field(default_factory=ExpectSection)
    output: OutputSection = field(default_factory=OutputSection)
    base_dir: str = field(default=".", compare=False)
    source: str = field(default="", compare=False)

    @property
    def spectral_L(self) -> int:
        return self.spectral.L if self.spectral.L is not None else self.geometry.L

    def replace(self, section: str, **changes) -> "ExperimentConfig":
        """Copy with ``changes`` applied to one section (no re-validation)."""
        sec = dataclasses.replace(getattr(self, section), **changes)
        return dataclasses.replace(self, **{section: sec})


# -- value codecs ------------------------------------------------------------------


def _fmt_float(x: float) -> str:
    # shortest round-trip decimal, as repr does
    return repr(float(x))


def _encode(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return _fmt_float(value)
    if isinstance(value, tuple):
        return ", ".join(_encode(v) for v in value)
    return str(value)


def _field_kind(section_cls, name):
    """Decode target for a dataclass field, from its annotation string."""
    ann = {f.name: f.type for f in dataclasses.fields(section_cls)}[name]
    ann = ann if isinstance(ann, str) else getattr(ann, "__name__", str(ann))
    optional = ann.startswith("Optional[")
    core = ann[len("Optional["):-1] if optional else ann
    return core, optional


def _decode(raw: str, core: str, optional: bool, where: str):
    raw = raw.strip()
    if raw == "":
        if optional:
            return None
        if core.startswith("Tuple"):
            return ()
        if core == "str":
            return ""
        raise ValueError("a value is required")
    if core == "str":
        return raw
    if core == "bool":
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"expected a boolean, got {raw!r}")
    if core == "int":
        try:
            return int(raw)
        except ValueError:
            raise ValueError(f"expected an integer, got {raw!r}") from None
    if core == "float":
        return _parse_float(raw)
    if core.startswith("Tuple"):
        items = [s.strip() for s in raw.split(",") if s.strip()]
        if "str" in core:
            return tuple(items)
        vals = tuple(_parse_float(s) for s in items)
        if core == "Tuple[float, float]" and len(vals) != 2:
            raise ValueError(f"expected two values 'lo, hi', got {raw!r}")
        return vals
    raise AssertionError(f"unhandled field type {core} at {where}")  # pragma: no cover


def _parse_float(s: str) -> float:
    try:
        v = float(s)
    except ValueError:
        raise ValueError(f"expected a number, got {s!r}") from None
    if not math.isfinite(v):
        raise ValueError(f"expected a finite number, got {s!r}")
    return v


# -- parsing -------------------------------------------------------------------------

_SECTION_RE = re.compile(r"^\s*\[([^\]]+)\]")
_KEY_RE = re.compile(r"^\s*([^=:\s#;\[][^=:]*?)\s*[=:]")


def _line_map(text: str) -> Dict[Tuple[str, str], int]:
    out: Dict[Tuple[str, str], int] = {}
    section = None
    for i, line in enumerate(text.splitlines(), start=1):
        m = _SECTION_RE.match(line)
        if m:
            section = m.group(1).strip().lower()
            out.setdefault((section, ""), i)
            continue
        m = _KEY_RE.match(line)
        if m and section is not None and not line[:1].isspace():
            out.setdefault((section, m.group(1).strip().lower()), i)
    return out


def parse_config(text: str, source: str = "", base_dir: str = ".") -> ExperimentConfig:
    """Parse and validate config text; raises :class:`ConfigError`."""
    lines = _line_map(text)
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None)
    cp.optionxform = str.lower
    try:
        cp.read_string(text, source=source or "<config>")
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        raise ConfigError(f"malformed config: {exc.message if hasattr(exc, 'message') else exc}",
                          line=line, source=source) from None
    sections = {}
    for name in cp.sections():
        key = name.lower()
        if key not in SECTIONS:
            raise ConfigError(f"unknown section [{name}]; expected one of {sorted(SECTIONS)}",
                              field=key, line=lines.get((key, "")), source=source)
        cls = SECTIONS[key]
        names = {f.name.lower(): f.name for f in dataclasses.fields(cls)}
        kwargs = {}
        for opt, raw in cp.items(name):
            where = f"{key}.{opt}"
            line = lines.get((key, opt))
            if opt not in names:
                raise ConfigError(f"unknown key {opt!r}; expected one of {sorted(names)}",
                                  field=where, line=line, source=source)
            core, optional = _field_kind(cls, names[opt])
            try:
                kwargs[names[opt]] = _decode(raw, core, optional, where)
            except ValueError as exc:
                raise ConfigError(str(exc), field=where, line=line, source=source) from None
        try:
            sections[key] = cls(**kwargs)
        except ValueError as exc:
            raise ConfigError(str(exc), field=key, line=lines.get((key, "")), source=source) from None
    cfg = ExperimentConfig(**sections, base_dir=base_dir, source=source)
    validate(cfg, lines)
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", source=str(path)) from None
    return parse_config(text, source=str(path), base_dir=str(path.parent))


# -- serialization -------------------------------------------------------------------


def serialize(cfg: ExperimentConfig) -> str:
    """Canonical text: every section and key, in schema order, floats as repr."""
    out = []
    for name in SECTIONS:
        sec = getattr(cfg, name)
        out.append(f"[{name}]")
        for f in dataclasses.fields(sec):
            out.append(f"{f.name} = {_encode(getattr(sec, f.name))}".rstrip())
        out.append("")
    return "\n".join(out)


def config_hash(cfg: ExperimentConfig) -> str:
    return hashlib.sha256(serialize(cfg).encode()).hexdigest()


# -- validation ------------------------------------------------------------------------


def _err(lines, msg, section, key=""):
    line = lines.get((section, key.lower())) if key else lines.get((section, ""))
    if line is None:
        line = lines.get((section, ""))
    return ConfigError(msg, field=f"{section}.{key}" if key else section, line=line)


def _in_unit(lines, value, section, key):
    if value is not None and not 0 < value < 1:
        raise _err(lines, f"{key} = {value!r} must lie in (0, 1)", section, key)


def initial_state(cfg: ExperimentConfig, geometry=None):
    """Build the configured initial :class:`~ballistic.lattice.LatticeState`."""
    from .lattice import BoxGeometry, LatticeState, load_state_csv

    g = geometry or BoxGeometry(cfg.geometry.d, cfg.geometry.L)
    ini = cfg.initial
    if ini.kind == "delta":
        site = tuple(int(round(c)) for c in ini.center) if ini.center else None
        return LatticeState.delta(g, site)
    if ini.kind == "gaussian":
        return LatticeState.gaussian(
            g, center=ini.center or None, width=ini.width, momentum=ini.momentum or None
        )
    path = Path(ini.path)
    if not path.is_absolute():
        path = Path(cfg.base_dir) / path
    state = load_state_csv(path)
    if state.geometry != g:
        raise ValueError(f"state file {path} has geometry {state.geometry}, config says {g}")
    return state


def horizon(cfg: ExperimentConfig) -> Tuple[float, int]:
    """``(t_max_allowed, initial_support_radius)`` for the dynamics stage."""
    from .lattice import BoxGeometry, support_radius
    from .propagation import light_cone_horizon

    g = BoxGeometry(cfg.geometry.d, cfg.geometry.L)
    r0 = support_radius(initial_state(cfg, g))
    return light_cone_horizon(g, r0, cfg.times.safety), r0


def time_grid(cfg: ExperimentConfig, t_max: float) -> np.ndarray:
    tm = cfg.times
    if tm.spacing == "geometric":
        grid = np.geomspace(tm.t_min, t_max, tm.count)
    else:
        grid = np.linspace(tm.t_min, t_max, tm.count)
    grid[-1] = t_max
    return np.concatenate([[0.0], grid]) if tm.include_zero and tm.t_min > 0 else grid


def fit_window(cfg: ExperimentConfig, t_max: float) -> Tuple[float, float]:
    return cfg.fit.window if cfg.fit.window is not None else (10.0, 0.8 * t_max)


def validate(cfg: ExperimentConfig, lines=None) -> None:
    """All pre-compute checks; raises :class:`ConfigError`."""
    lines = lines or {}
    try:
        _validate(cfg, lines)
    except ConfigError as exc:
        exc.source = exc.source or cfg.source
        exc.args = (exc.describe(),)
        raise


def _validate(cfg, lines):
    run, geo, pot, ini, tm = cfg.run, cfg.geometry, cfg.potential, cfg.initial, cfg.times
    bad = [s for s in run.stages if s not in STAGES]
    if bad or not run.stages:
        raise _err(lines, f"stages must be a non-empty subset of {STAGES}, got {run.stages}", "run", "stages")
    if geo.d < 1:
        raise _err(lines, "d must be a positive integer", "geometry", "d")
    if geo.L < 1:
        raise _err(lines, "L must be a positive integer", "geometry", "L")
    if pot.family == "wigner_von_neumann" and geo.d != 1:
        raise _err(lines, "wigner_von_neumann is defined for d = 1 only", "potential", "family")
    if ini.kind not in INITIAL_KINDS:
        raise _err(lines, f"kind must be one of {INITIAL_KINDS}", "initial", "kind")
    if ini.center and len(ini.center) != geo.d:
        raise _err(lines, f"center needs {geo.d} coordinates", "initial", "center")
    if ini.momentum and len(ini.momentum) not in (1, geo.d):
        raise _err(lines, f"momentum needs 1 or {geo.d} components", "initial", "momentum")
    if ini.kind == "gaussian" and not ini.width > 0:
        raise _err(lines, "width must be positive", "initial", "width")
    if ini.kind == "file" and not ini.path:
        raise _err(lines, "kind = file needs a path", "initial", "path")
    if ini.center and any(abs(c) > geo.L for c in ini.center):
        raise _err(lines, "center lies outside the box", "initial", "center")
    _in_unit(lines, tm.safety, "times", "safety")
    _in_unit(lines, cfg.fit.tol, "fit", "tol")
    _in_unit(lines, cfg.propagator.tolerance, "propagator", "tolerance")
    _in_unit(lines, cfg.spectral.ipr_threshold, "spectral", "ipr_threshold")
    _in_unit(lines, cfg.spectral.boundary_threshold, "spectral", "boundary_threshold")
    if cfg.propagator.tau is not None and not cfg.propagator.tau > 0:
        raise _err(lines, "tau must be positive", "propagator", "tau")

    if "dynamics" in run.stages:
        _validate_dynamics(cfg, lines)
    if "spectral" in run.stages:
        n = (2 * cfg.spectral_L + 1) ** geo.d
        if n > DENSE_CAP:
            raise _err(lines, f"spectral box has {n} sites, above the dense cap {DENSE_CAP}", "spectral", "L")
        if not 0 < cfg.spectral.theta < 2 * geo.d + 1e-12:
            raise _err(lines, f"theta must lie in (0, {2 * geo.d}]", "spectral", "theta")
        if any(x <= 0 for x in cfg.spectral.deltas):
            raise _err(lines, "deltas must be positive", "spectral", "deltas")


def _validate_dynamics(cfg, lines):
    tm, mo = cfg.times, cfg.moments
    if tm.spacing not in SPACINGS:
        raise _err(lines, f"spacing must be one of {SPACINGS}", "times", "spacing")
    if tm.count < 2:
        raise _err(lines, "count must be at least 2", "times", "count")
    if not tm.t_min > 0:
        raise _err(lines, "t_min must be positive", "times", "t_min")
    if not mo.orders or any(not 0 < r <= 3 for r in mo.orders):
        raise _err(lines, "orders must be a non-empty list in (0, 3]", "moments", "orders")
    if any(n < 0 for n in mo.ball_radii):
        raise _err(lines, "ball radii must be nonnegative", "moments", "ball_radii")
    try:
        t_allowed, r0 = horizon(cfg)
    except (ValueError, OSError) as exc:
        raise _err(lines, f"initial state: {exc}", "initial", "kind") from None
    t_max = tm.t_max if tm.t_max is not None else t_allowed
    if t_max > t_allowed:
        raise _err(
            lines,
            f"horizon rule violated: t_max = {t_max!r} exceeds the light-cone horizon "
            f"safety*(L - r0)/(2d) = {t_allowed!r} (L={cfg.geometry.L}, r0={r0}, d={cfg.geometry.d})",
            "times", "t_max",
        )
    if not t_max > tm.t_min:
        raise _err(lines, f"t_max = {t_max!r} must exceed t_min = {tm.t_min!r}", "times", "t_max")
    lo, hi = fit_window(cfg, t_max)
    if lo < 1 or hi <= lo or hi > t_max:
        raise _err(lines, f"fit window [{lo}, {hi}] must satisfy 1 <= lo < hi <= t_max = {t_max!r}", "fit", "window")
    grid = time_grid(cfg, t_max)
    inside = int(np.sum((grid >= lo) & (grid <= hi)))
    if inside < 8:
        raise _err(lines, f"fit window [{lo}, {hi}] holds {inside} sample times, need 8", "fit", "window")
