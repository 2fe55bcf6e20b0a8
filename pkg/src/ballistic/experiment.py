"""Config-driven pipeline, parameter sweeps and run manifests.

A run executes the stages named in ``[run] stages``:

``dynamics``
    realize the potential, propagate the initial state through the sample
    grid, write ``series.csv`` and the fit / bound / RAGE reports.
``spectral``
    dense diagonalization on a box of radius ``[spectral] L``, Mourre form
    on ``J_theta``, compact split, interval-shrinking scan and the a.c.
    surrogate; writes ``spectral.json`` and ``eigen.csv``.

Exit codes: 0 all expectations met, 1 some expectation failed (listed in
``failures.json``), 2 configuration error, 3 numerical abort (norm drift).
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import os
import platform
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import __version__, kernels
from .config import (
    ConfigError,
    ExperimentConfig,
    config_hash,
    fit_window,
    horizon,
    initial_state,
    serialize,
    time_grid,
    validate,
)
from .lattice import BoxGeometry
from .operators import Hamiltonian, commutator_norm, weighted_commutator_norm
from .potentials import decay_profile, realize, satisfies_decay_hypothesis
from .propagation import NormDriftError, Propagator

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_DRIFT = 0, 1, 2, 3

#: Box radius on which the commutator constants are estimated; the estimates
#: are geometry-only (``[Q, V] = 0``) and saturate long before this size.
NORM_BOX_L = 200


@dataclass
class RunResult:
    exit_code: int
    out_dir: Path
    config_hash: str
    failures: List[dict] = field(default_factory=list)
    summary: Dict[str, object] = field(default_factory=dict)
    error: str = ""


# -- output helpers ---------------------------------------------------------------


def _clean(obj):
    """JSON-safe copy: NaN/inf become None, numpy scalars become Python ones."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path, payload) -> None:
    # json renders floats with repr: shortest round-trip decimals
    with open(path, "w") as fh:
        json.dump(_clean(payload), fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def environment_fingerprint() -> dict:
    import scipy

    return {
        "python": platform.python_version(),
        "implementation": platform.python_implementation(),
        "platform": platform.platform(),
        "machine": platform.machine(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "kernel_backend": kernels.backend(),
    }


def resolve_out_dir(cfg: ExperimentConfig, cli_out: Optional[str] = None) -> Path:
    """``--out`` > ``[output] dir`` > ``$BALLISTIC_OUT/<name>`` > ``./ballistic_runs/<name>``."""
    if cli_out:
        return Path(cli_out)
    if cfg.output.dir:
        p = Path(cfg.output.dir)
        return p if p.is_absolute() else Path(cfg.base_dir) / p
    root = os.environ.get("BALLISTIC_OUT", "ballistic_runs")
    return Path(root) / cfg.run.name


# -- stages --------------------------------------------------------------------------


def _check(failures, name, ok, measured, threshold):
    if not ok:
        failures.append({"check": name, "measured": measured, "threshold": threshold})


def _dynamics(cfg: ExperimentConfig, h: str, out: Path, failures: list, summary: dict) -> List[str]:
    from .transport import (
        check_upper_bounds,
        fit_transport_exponent,
        interpolation_violations,
        jensen_violations,
        rage_diagnostics,
        record_moments,
    )

    g = BoxGeometry(cfg.geometry.d, cfg.geometry.L)
    pot = realize(cfg.potential, g)
    H = Hamiltonian(g, pot)
    u = initial_state(cfg, g)
    t_allowed, r0 = horizon(cfg)
    t_max = cfg.times.t_max if cfg.times.t_max is not None else t_allowed
    grid = time_grid(cfg, t_max)
    prop = Propagator(H, tau=cfg.propagator.tau, tolerance=cfg.propagator.tolerance)
    orders = sorted(set(cfg.moments.orders) | {1.0, 2.0})
    series = record_moments(H, u, orders, grid, cfg.moments.ball_radii, propagator=prop,
                            horizon=t_allowed, config_hash=h)
    series.to_csv(out / "series.csv")

    window = fit_window(cfg, t_max)
    fits = {}
    for r in cfg.moments.orders:
        fits[r] = fit_transport_exponent(series, r, window, tol=cfg.fit.tol)

    gn = BoxGeometry(g.d, min(g.L, NORM_BOX_L))
    c1 = commutator_norm(Hamiltonian(gn), rtol=1e-10)
    kappa2 = weighted_commutator_norm(gn, 2, rtol=1e-10)
    upper = check_upper_bounds(series, H, u, c1=c1, kappa2=kappa2)

    jensen = jensen_violations(series.norms, series.orders)
    interp = None
    if all(any(abs(o - r) < 1e-12 for o in series.orders) for r in (1.0, 1.5, 2.0)):
        interp = interpolation_violations(series.column(1.0), series.column(1.5), series.column(2.0), 1.0, 1.5)

    write_json(out / "fits.json", {
        "config_hash": h,
        "window": list(window),
        "fits": {f"r={r!r}": f.as_dict() for r, f in fits.items()},
    })
    write_json(out / "bounds.json", {
        "config_hash": h,
        "norm_box_L": gn.L,
        **upper.as_dict(),
        "jensen_violations": jensen,
        "interpolation_violations": interp,
    })
    files = ["series.csv", "fits.json", "bounds.json"]
    if len(series.ball_radii) >= 2:
        rage = rage_diagnostics(series)
        for v in rage.values():
            v.pop("time_average_curve")
        write_json(out / "rage.json", {"config_hash": h, "radii": rage})
        files.append("rage.json")
    write_json(out / "potential.json", {
        "config_hash": h,
        "label": pot.label,
        "sup_norm": pot.sup_norm,
        "decay_profile": [list(p) for p in decay_profile(pot)],
        "satisfies_decay_hypothesis": satisfies_decay_hypothesis(pot),
    })
    files.append("potential.json")

    ex = cfg.expect
    main_r = ex.slope_order if ex.slope_order in fits else next(iter(fits))
    fit = fits[main_r]
    band = fit.ratio_max / fit.ratio_min
    summary.update(
        slope=fit.slope, slope_order=main_r, ratio_band=band, horizon=t_allowed, t_max=t_max,
        support_radius=r0, chebyshev_order=prop.plan.order, tau=prop.tau,
        order1_violations=upper.order1_violations, c2_min=upper.c2_min,
    )
    if ex.slope_min is not None:
        _check(failures, f"slope(r={main_r!r}) >= slope_min", fit.slope >= ex.slope_min, fit.slope, ex.slope_min)
    if ex.slope_max is not None:
        _check(failures, f"slope(r={main_r!r}) <= slope_max", fit.slope <= ex.slope_max, fit.slope, ex.slope_max)
    if ex.ratio_band_max is not None:
        _check(failures, "ratio band max/min <= ratio_band_max", band <= ex.ratio_band_max, band, ex.ratio_band_max)
    if ex.ball_sup_min is not None:
        try:
            i = [abs(n - ex.ball_radius) < 1e-12 for n in series.ball_radii].index(True)
        except ValueError:
            failures.append({"check": "ball_sup_min", "measured": None,
                             "threshold": ex.ball_sup_min,
                             "detail": f"ball radius {ex.ball_radius!r} not recorded"})
        else:
            sup = float(series.balls[:, i].max())
            summary["ball_sup"] = sup
            _check(failures, f"sup ball probability (N={ex.ball_radius!r}) >= ball_sup_min",
                   sup >= ex.ball_sup_min, sup, ex.ball_sup_min)
    if ex.order1_envelope:
        _check(failures, "order-1 envelope violations == 0", upper.order1_violations == 0,
               upper.order1_violations, 0)
    _check(failures, "Jensen violations == 0", jensen == 0, jensen, 0)
    if interp is not None:
        _check(failures, "interpolation violations == 0", interp == 0, interp, 0)
    return files


def _spectral(cfg: ExperimentConfig, h: str, out: Path, failures: list, summary: dict) -> List[str]:
    from .spectral import (
        EnergyInterval,
        EmptyIntervalError,
        _DenseCache,
        ac_surrogate_projection,
        dense_eigendecomposition,
        dump_eigen_csv,
        mourre_compact_split,
        mourre_form_min,
        shrink_interval_scan,
    )

    sp = cfg.spectral
    g = BoxGeometry(cfg.geometry.d, cfg.spectral_L)
    pot = realize(cfg.potential, g)
    H = Hamiltonian(g, pot)
    decomp = dense_eigendecomposition(H)
    free = decomp if cfg.potential.family == "zero" else dense_eigendecomposition(Hamiltonian(g))
    interval = EnergyInterval.j_theta(g.d, sp.theta)
    cache = _DenseCache(H)
    report = {"config_hash": h, "L": g.L, "d": g.d, "theta": sp.theta, "interval": interval.as_dict(),
              "residual": decomp.residual, "orthonormality": decomp.orthonormality}
    try:
        mf = mourre_form_min(decomp, H, interval, cache)
        split = mourre_compact_split(free, decomp, H, interval, sp.theta, cache)
    except EmptyIntervalError as exc:
        failures.append({"check": "spectral window non-empty", "measured": 0, "threshold": 1,
                         "detail": str(exc)})
        write_json(out / "spectral.json", report)
        return ["spectral.json"]
    report["mourre"] = {
        "dimension": mf.dimension, "min_rayleigh": mf.min_rayleigh,
        "min_rayleigh_box": mf.min_rayleigh_box, "symmetry_defect": mf.symmetry_defect,
        "symbol_law_d1": 8 * sp.theta * (1 - sp.theta / 4) if g.d == 1 else None,
        "reference_constant_2theta_over_d": 2.0 * sp.theta / g.d,
    }
    report["compact_split"] = split.as_dict()
    scan = shrink_interval_scan(decomp, H, sp.deltas, e0=sp.e0, base=interval, theta=sp.theta, cache=cache)
    report["shrink_scan"] = scan
    hits = [r for r in scan if r["dimension"] > 0 and r["below_half_theta"]]
    report["smallest_delta_below_half_theta"] = min((r["delta"] for r in hits), default=None)
    sur = ac_surrogate_projection(decomp, interval, sp.ipr_threshold, sp.boundary_threshold)
    report["ac_surrogate"] = {"rank": sur.rank, "candidates": sur.candidates,
                              "pass_fraction": sur.pass_fraction}
    write_json(out / "spectral.json", report)
    dump_eigen_csv(decomp, out / "eigen.csv", header=f"config_hash={h}")

    best = max(hits, key=lambda r: r["certified_bound"], default=None)
    summary.update(min_rayleigh=mf.min_rayleigh, min_rayleigh_box=mf.min_rayleigh_box,
                   compact_norm=split.compact_norm, certified_bound=split.certified_bound,
                   scan_certified_bound=best["certified_bound"] if best else None,
                   surrogate_pass_fraction=sur.pass_fraction)
    ex = cfg.expect
    if ex.min_rayleigh_min is not None:
        _check(failures, "min_rayleigh >= min_rayleigh_min", mf.min_rayleigh >= ex.min_rayleigh_min,
               mf.min_rayleigh, ex.min_rayleigh_min)
    if ex.certified_bound_min is not None:
        cb = summary["scan_certified_bound"]
        _check(failures, "certified bound (best scan window) >= certified_bound_min",
               cb is not None and cb >= ex.certified_bound_min, cb, ex.certified_bound_min)
    return ["spectral.json", "eigen.csv"]


# -- entry points ----------------------------------------------------------------------


def run_experiment(cfg: ExperimentConfig, out_dir, log=None) -> RunResult:
    """Execute the configured stages; never raises for numerical aborts."""
    log = log or (lambda msg: None)
    t0 = time.perf_counter()
    validate(cfg)
    h = config_hash(cfg)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.cfg").write_text(f"# config_hash={h}\n" + serialize(cfg))
    files = ["config.cfg"]
    failures: List[dict] = []
    summary: Dict[str, object] = {}
    code, error = EXIT_OK, ""
    try:
        if "dynamics" in cfg.run.stages:
            log(f"[{cfg.run.name}] dynamics: d={cfg.geometry.d} L={cfg.geometry.L} {cfg.potential.label()}")
            files += _dynamics(cfg, h, out, failures, summary)
        if "spectral" in cfg.run.stages:
            log(f"[{cfg.run.name}] spectral: L={cfg.spectral_L} theta={cfg.spectral.theta!r}")
            files += _spectral(cfg, h, out, failures, summary)
    except NormDriftError as exc:
        code, error = EXIT_DRIFT, f"numerical abort: {exc}"
    if code == EXIT_OK and failures:
        code = EXIT_FAIL
    write_json(out / "failures.json", {"config_hash": h, "exit_code": code, "failures": failures, "error": error})
    files.append("failures.json")
    manifest = {
        "config_hash": h,
        "artifact_version": __version__,
        "wall_clock_seconds": time.perf_counter() - t0,
        "exit_code": code,
        "checksums": {name: sha256_file(out / name) for name in files},
        "environment": environment_fingerprint(),
        "summary": summary,
    }
    write_json(out / "manifest.json", manifest)
    return RunResult(code, out, h, failures, summary, error)


# -- sweeps --------------------------------------------------------------------------------

AXES = ("alpha", "lam", "theta", "L", "r")


def apply_axis(cfg: ExperimentConfig, axis: str, value: float) -> ExperimentConfig:
    """Config for one sweep point (validated by the caller)."""
    if axis == "alpha":
        if cfg.potential.family != "power_law":
            raise ConfigError("axis alpha needs potential family power_law", field="potential.family",
                              source=cfg.source)
        return cfg.replace("potential", alpha=float(value))
    if axis == "lam":
        if cfg.potential.family != "anderson":
            raise ConfigError("axis lam needs potential family anderson", field="potential.family",
                              source=cfg.source)
        return cfg.replace("potential", lam=float(value))
    if axis == "theta":
        stages = cfg.run.stages if "spectral" in cfg.run.stages else cfg.run.stages + ("spectral",)
        return cfg.replace("run", stages=stages).replace("spectral", theta=float(value))
    if axis == "L":
        if float(value) != int(value):
            raise ConfigError(f"L must be an integer, got {value!r}", field="geometry.L", source=cfg.source)
        return cfg.replace("geometry", L=int(value)).replace("spectral", L=None)
    if axis == "r":
        return cfg.replace("moments", orders=(float(value),)).replace("expect", slope_order=float(value))
    raise ConfigError(f"unknown sweep axis {axis!r}; expected one of {AXES}", field="--axis")


SWEEP_COLUMNS = ("index", "axis", "value", "exit_code", "slope", "ratio_band", "min_rayleigh",
                 "compact_norm", "certified_bound", "failures", "config_hash", "error")


def _run_point(args):
    index, axis, value, cfg, out = args
    row = {"index": index, "axis": axis, "value": value}
    try:
        pc = apply_axis(cfg, axis, value)
        validate(pc)
        res = run_experiment(pc, out)
    except ConfigError as exc:
        row.update(exit_code=EXIT_CONFIG, error=exc.describe())
        return row
    s = res.summary
    row.update(exit_code=res.exit_code, slope=s.get("slope"), ratio_band=s.get("ratio_band"),
               min_rayleigh=s.get("min_rayleigh"), compact_norm=s.get("compact_norm"),
               certified_bound=s.get("certified_bound"), failures=len(res.failures),
               config_hash=res.config_hash, error=res.error)
    return row


def _fmt_cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def run_sweep(cfg: ExperimentConfig, axis: str, values: Sequence[float], out_dir, workers: int = 1,
              log=None) -> List[dict]:
    """One run per axis value, each in its own subdirectory; writes ``sweep.csv``."""
    import csv

    log = log or (lambda msg: None)
    if axis not in AXES:
        raise ConfigError(f"unknown sweep axis {axis!r}; expected one of {AXES}", field="--axis")
    if not values:
        raise ConfigError("empty axis grid: --values must list at least one value", field="--values")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    jobs = [(i, axis, float(v), cfg, out / f"point_{i:03d}") for i, v in enumerate(values)]
    if workers <= 1:
        rows = []
        for job in jobs:
            rows.append(_run_point(job))
            log(f"point {job[0]}: {axis}={job[2]!r} exit={rows[-1]['exit_code']}")
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_run_point, jobs))
    rows.sort(key=lambda r: r["index"])
    with open(out / "sweep.csv", "w", newline="") as fh:
        fh.write(f"# base_config_hash={config_hash(cfg)} axis={axis}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_COLUMNS)
        for r in rows:
            w.writerow([_fmt_cell(r.get(c)) for c in SWEEP_COLUMNS])
    return rows
