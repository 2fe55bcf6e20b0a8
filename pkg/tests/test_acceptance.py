"""Acceptance suite: the fourteen end-to-end criteria at their stated tolerances.

Each test prints one ``PASS criterion N`` / ``FAIL criterion N`` line with the
measured margins (collected again in the pytest terminal summary).  Run
stand-alone with ``python tests/test_acceptance.py``.

Criterion 9 (order-2 envelope with constant c1/2) is asserted as stated and
fails: the measured minimal constant exceeds c1/2 for every run, including the
free delta where it is known in closed form.  See the README.
"""

import math
import sys

import numpy as np
import pytest

from ballistic import cli
from ballistic.config import fit_window, horizon, initial_state, load_config, time_grid
from ballistic.experiment import NORM_BOX_L, run_experiment
from ballistic.lattice import BoxGeometry, LatticeState, weighted_norms
from ballistic.operators import (
    Hamiltonian,
    PotentialField,
    commutator_norm,
    double_commutator_array,
    free_double_commutator_closed_form,
    weighted_commutator_norm,
)
from ballistic.potentials import PotentialSpec, realize
from ballistic.propagation import Propagator
from ballistic.spectral import (
    EnergyInterval,
    dense_eigendecomposition,
    mourre_compact_split,
    mourre_form_min,
    shrink_interval_scan,
)
from ballistic.transport import (
    check_upper_bounds,
    fit_transport_exponent,
    heisenberg_expansion_check,
    interpolation_violations,
    jensen_violations,
    record_moments,
)

RESULTS = []


def report(n, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}"
    RESULTS.append(line)
    print(line, flush=True)
    assert ok, line


def families(d):
    out = [PotentialSpec(), PotentialSpec("power_law", c=1, alpha=2), PotentialSpec("anderson", lam=8, seed=7),
           PotentialSpec("periodic", pattern=(1.0, -0.5, -0.5))]
    if d == 1:
        out.append(PotentialSpec("wigner_von_neumann", c=1, k=1))
    return out


def c1_for(spec, d=1):
    """Commutator-norm estimate of criterion 2 (box radius 200)."""
    g = BoxGeometry(d, NORM_BOX_L)
    return commutator_norm(Hamiltonian(g, realize(spec, g)), rtol=1e-10)


# -- dynamics runs shared by criteria 4-9 and 13 ------------------------------------------


class Run:
    def __init__(self, label, H, u, series, window):
        self.label, self.H, self.u, self.series, self.window = label, H, u, series, window


def run_config(name, label=None, **potential_changes):
    cfg = load_config(cli.resolve_config(name))
    if potential_changes:
        cfg = cfg.replace("potential", **potential_changes)
    g = BoxGeometry(cfg.geometry.d, cfg.geometry.L)
    H = Hamiltonian(g, realize(cfg.potential, g))
    u = initial_state(cfg, g)
    t_allowed, _ = horizon(cfg)
    t_max = cfg.times.t_max or t_allowed
    orders = sorted(set(cfg.moments.orders) | {1.0, 2.0})
    ser = record_moments(H, u, orders, time_grid(cfg, t_max), cfg.moments.ball_radii, horizon=t_allowed)
    return Run(label or name, H, u, ser, fit_window(cfg, t_max))


@pytest.fixture(scope="module")
def free_run():
    return run_config("free_1d")


@pytest.fixture(scope="module")
def power_run():
    return run_config("power_law_1d")


ALPHAS = (0.5, 1.0, 1.5, 2.0, 3.0)


@pytest.fixture(scope="module")
def alpha_runs():
    return [run_config("alpha_sweep_1d", f"alpha={a}", alpha=a) for a in ALPHAS]


@pytest.fixture(scope="module")
def anderson_run():
    return run_config("anderson_control")


@pytest.fixture(scope="module")
def all_runs(free_run, power_run, alpha_runs, anderson_run):
    return [free_run, power_run, *alpha_runs, anderson_run]


@pytest.fixture(scope="module")
def c1_hat():
    return c1_for(PotentialSpec())


# -- 1 ----------------------------------------------------------------------------------


def test_criterion_01_double_commutator_identity():
    worst = {}
    for d, L in ((1, 50), (2, 12)):
        g = BoxGeometry(d, L)
        X = np.random.default_rng(1).normal(size=(g.total_sites, 100))
        diff = double_commutator_array(X, Hamiltonian(g)) - free_double_commutator_closed_form(X, g)
        worst[(d, L)] = float(np.abs(diff[g.boundary_distance() >= 2]).max())
    ok = max(worst.values()) <= 1e-12
    report(1, ok, "max interior defect " + ", ".join(f"d={d} L={L}: {v:.2e}" for (d, L), v in worst.items())
           + " (<= 1e-12)")


# -- 2 ----------------------------------------------------------------------------------


def test_criterion_02_commutator_bound():
    rows = []
    ok = True
    for d in (1, 2):
        for spec in families(d):
            val = c1_for(spec, d)
            ok &= val <= 2 * d * math.sqrt(5) + 1e-9
            rows.append(f"d={d} {spec.family}={val:.6f}")
    report(2, ok, f"||[Q,H]|| at L=200 within 2d*sqrt5 (4.472/8.944): " + "; ".join(rows))


# -- 3 ----------------------------------------------------------------------------------


def test_criterion_03_oracle_equivalence():
    rng = np.random.default_rng(2024)
    diff = drift = rev = 0.0
    for _ in range(20):
        d = int(rng.integers(1, 3))
        L = int(rng.integers(20, 256)) if d == 1 else int(rng.integers(3, 11))
        g = BoxGeometry(d, L)
        H = Hamiltonian(g, PotentialField(g, rng.uniform(-4, 4, g.total_sites)))
        u = LatticeState.random(g, rng=rng)
        t = float(rng.uniform(0, 50))
        prop = Propagator(H)
        a = prop.advance(u.amplitudes, t)
        b = dense_eigendecomposition(H).evolve(u.amplitudes, t)
        diff = max(diff, float(np.linalg.norm(a - b)))
        drift = max(drift, abs(float(np.linalg.norm(a)) - 1.0))
        rev = max(rev, float(np.linalg.norm(prop.advance(a, -t) - u.amplitudes)))
    ok = diff <= 1e-10 and drift <= 1e-11 and rev <= 1e-9
    report(3, ok, f"20 triples: oracle diff {diff:.2e} (<=1e-10), unitarity {drift:.2e} (<=1e-11), "
                  f"reversal {rev:.2e} (<=1e-9)")


# -- 4 ----------------------------------------------------------------------------------


def test_criterion_04_free_ballistic_law(free_run):
    s = free_run.series
    t = s.times
    sel = (t >= 1) & (t <= 450)
    m2 = s.column(1.0) ** 2 - s.column(0.0) ** 2  # sum n^2 |psi_n|^2
    rel = float(np.abs(m2[sel] / (2 * t[sel] ** 2) - 1).max())
    fit = fit_transport_exponent(s, 1.0, (10, 400))
    ok = rel <= 1e-3 and abs(fit.slope - 1) <= 0.02 and t[sel][-1] == 450
    report(4, ok, f"L=2048: max rel. dev. of second moment from 2t^2 on [1,450] = {rel:.2e} (<=1e-3); "
                  f"r=1 slope on [10,400] = {fit.slope:.4f} (1 +- 0.02)")


# -- 5 ----------------------------------------------------------------------------------


def test_criterion_05_power_law_two_sided(power_run):
    s = power_run.series
    lo, hi = 10.0, 0.8 * s.horizon
    fits = {r: fit_transport_exponent(s, r, (lo, hi)) for r in (0.5, 1.0, 2.0)}
    band = fits[1.0].ratio_max / fits[1.0].ratio_min
    ok = all(0.95 <= f.slope <= 1.05 for f in fits.values()) and band <= 4
    report(5, ok, "L=8192 power_law(1,2): slopes " + ", ".join(f"r={r}: {f.slope:.4f}" for r, f in fits.items())
           + f" (in [0.95,1.05]); r=1 ratio band max/min = {band:.3f} (<=4) on [10, {hi:.1f}]")


# -- 6 ----------------------------------------------------------------------------------


def test_criterion_06_alpha_sweep(alpha_runs):
    slopes = [fit_transport_exponent(r.series, 1.0, r.window).slope for r in alpha_runs]
    ballistic_ok = all(s >= 0.95 for a, s in zip(ALPHAS, slopes) if a >= 1.5)
    mono_ok = all(b >= a - 0.03 for a, b in zip(slopes, slopes[1:]))
    report(6, ballistic_ok and mono_ok,
           "L=4096 r=1 slopes " + ", ".join(f"alpha={a}: {s:.4f}" for a, s in zip(ALPHAS, slopes))
           + " (>=0.95 for alpha>=1.5; nondecreasing within 0.03)")


# -- 7 ----------------------------------------------------------------------------------


def test_criterion_07_localization_control(anderson_run):
    s = anderson_run.series
    fit = fit_transport_exponent(s, 1.0, (10, 200))
    sup25 = float(s.balls[:, s.ball_radii.index(25.0)].max())
    ok = fit.slope <= 0.1 and sup25 >= 0.9
    report(7, ok, f"Anderson lam=8 L=2048: slope on [10,200] = {fit.slope:.4f} (<=0.1); "
                  f"sup in-ball(25) = {sup25:.4f} (>=0.9)")


# -- 8 / 9 ------------------------------------------------------------------------------


@pytest.fixture(scope="module")
def envelopes(all_runs, c1_hat):
    kappa2 = weighted_commutator_norm(BoxGeometry(1, NORM_BOX_L), 2, rtol=1e-10)
    return [(r.label, check_upper_bounds(r.series, r.H, r.u, c1=c1_hat, kappa2=kappa2)) for r in all_runs]


def test_criterion_08_order1_envelope(envelopes, c1_hat):
    viol = sum(rep.order1_violations for _, rep in envelopes)
    slack = min(rep.order1_min_slack for _, rep in envelopes)
    report(8, viol == 0, f"c1 = {c1_hat:.6f}; order-1 violations over {len(envelopes)} runs = {viol} (==0); "
                         f"min slack {slack:.3e}")


def test_criterion_09_order2_envelope(envelopes, c1_hat):
    limit = 1.05 * c1_hat / 2
    worst = max(rep.c2_min for _, rep in envelopes)
    corrected = sum(rep.order2_corrected_violations for _, rep in envelopes)
    detail = ", ".join(f"{label}: {rep.c2_min:.3f}" for label, rep in envelopes)
    report(9, worst <= limit,
           f"minimal c2 per run [{detail}] vs c1/2 + 5% = {limit:.4f}; "
           f"(stencil-corrected envelope violations: {corrected})")


# -- 10 ---------------------------------------------------------------------------------


def test_criterion_10_free_mourre():
    g = BoxGeometry(1, 200)
    H = Hamiltonian(g)
    D = dense_eigendecomposition(H)
    rows, ok = [], True
    for theta in (0.5, 1.0, 2.0):
        m = mourre_form_min(D, H, EnergyInterval.j_theta(1, theta)).min_rayleigh
        sym = 8 * theta * (1 - theta / 4)
        ok &= m >= 2 * theta and abs(m - sym) <= 0.05 * sym
        rows.append(f"theta={theta}: {m:.4f} (>= {2 * theta}, symbol {sym})")
    g2 = BoxGeometry(2, 20)
    H2 = Hamiltonian(g2)
    m2 = mourre_form_min(dense_eigendecomposition(H2), H2, EnergyInterval.j_theta(2, 1.0)).min_rayleigh
    report(10, ok, "d=1 L=200 " + "; ".join(rows) + f"; d=2 L=20 theta=1 reported: {m2:.5f}")


# -- 11 ---------------------------------------------------------------------------------


def test_criterion_11_compact_shrinking():
    g = BoxGeometry(1, 300)
    H = Hamiltonian(g, realize(PotentialSpec("power_law", c=1, alpha=2), g))
    D = dense_eigendecomposition(H)
    deltas = [0.0625, 0.125, 0.25, 0.5, 1.0, 2.0]
    rows = shrink_interval_scan(D, H, deltas, e0=0.0, theta=1.0)
    hits = [r for r in rows if r["dimension"] > 0 and r["compact_norm"] <= 0.5 and r["certified_bound"] >= 0.5]
    full = mourre_compact_split(dense_eigendecomposition(Hamiltonian(g)), D, H, EnergyInterval.j_theta(1, 1))
    detail = "; ".join(f"delta={r['delta']}: ||K||={r['compact_norm']:.4f} cert={r['certified_bound']:.4f}"
                       for r in rows)
    report(11, bool(hits), f"L=300 scan [{detail}]; full window ||K||={full.compact_norm:.4f}")


# -- 12 ---------------------------------------------------------------------------------


def test_criterion_12_heisenberg_expansion():
    g = BoxGeometry(1, 100)
    H = Hamiltonian(g)
    D = dense_eigendecomposition(H)
    I = EnergyInterval.j_theta(1, 1.0)
    theta_eff = mourre_form_min(D, H, I).min_rayleigh
    rep = heisenberg_expansion_check(D, H, I, LatticeState.gaussian(g, width=4.0), np.linspace(0, 10, 21),
                                     theta_eff=theta_eff)
    ok = rep.max_defect <= 1e-6 and rep.lower_bound_ok and rep.max_imag <= 1e-9
    report(12, ok, f"L=100 t<=10: defect {rep.max_defect:.2e} (<=1e-6), step {rep.step}, "
                   f"integral - (theta_eff/2)|chi u|^2 t^2 >= {rep.lower_bound_min_slack:.3e} "
                   f"with theta_eff={theta_eff:.4f}")


# -- 13 ---------------------------------------------------------------------------------


def test_criterion_13_moment_inequalities(all_runs):
    rng = np.random.default_rng(13)
    orders = [0.0, 0.5, 1.0, 1.5, 2.0, 3.0]
    viol = 0
    for _ in range(1000):
        d = int(rng.integers(1, 3))
        g = BoxGeometry(d, int(rng.integers(2, 40 if d == 1 else 8)))
        n = weighted_norms(LatticeState.random(g, rng=rng).amplitudes, g, orders)[None, :]
        viol += jensen_violations(n, orders)
        viol += interpolation_violations(n[:, 2], n[:, 3], n[:, 4], 1.0, 1.5)
    series_viol = 0
    for r in all_runs:
        s = r.series
        series_viol += jensen_violations(s.norms, s.orders)
        if 1.5 in s.orders:
            series_viol += interpolation_violations(s.column(1.0), s.column(1.5), s.column(2.0), 1.0, 1.5)
        else:  # (m, r, m + 1) = (0, 1/2 or 1, 1) covers series without r = 1.5
            for rr in (o for o in s.orders if 0 < o < 1):
                series_viol += interpolation_violations(s.column(0.0), s.column(rr), s.column(1.0), 0.0, rr)
    report(13, viol == 0 and series_viol == 0,
           f"violations: 1000 random states = {viol}, {len(all_runs)} recorded series = {series_viol} (slack 1e-12)")


# -- 14 ---------------------------------------------------------------------------------


def test_criterion_14_reproducibility(tmp_path):
    import json

    cfg = load_config(cli.resolve_config("free_1d"))
    a, b = run_experiment(cfg, tmp_path / "a"), run_experiment(cfg, tmp_path / "b")
    ca = json.loads((a.out_dir / "manifest.json").read_text())["checksums"]
    cb = json.loads((b.out_dir / "manifest.json").read_text())["checksums"]
    same_csv = (a.out_dir / "series.csv").read_bytes() == (b.out_dir / "series.csv").read_bytes()
    report(14, ca == cb and same_csv and a.exit_code == 0,
           f"free_1d rerun: {len(ca)} checksums equal = {ca == cb}; series.csv bytes equal = {same_csv}")


if __name__ == "__main__":  # pragma: no cover
    sys.exit(pytest.main([__file__, "-q", "-s"]))
