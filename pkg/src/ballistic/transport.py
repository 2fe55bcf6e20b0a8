"""Moment time series, exponent fits and the moment-bound checks."""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .lattice import LatticeState, ball_probabilities, weighted_norms
from .operators import (
    Hamiltonian,
    commutator_norm,
    dilation_array,
    double_commutator_array,
    weighted_commutator_norm,
)
from .propagation import Propagator

MAX_ORDER = 3.0


class HorizonError(ValueError):
    pass


@dataclass
class MomentSeries:
    orders: List[float]
    times: np.ndarray = field(repr=False)
    norms: np.ndarray = field(repr=False)  # (T, len(orders))
    ball_radii: List[float] = field(default_factory=list)
    balls: np.ndarray = field(default=None, repr=False)  # (T, len(ball_radii))
    horizon: float = math.inf
    config_hash: str = ""

    def column(self, r: float) -> np.ndarray:
        for i, o in enumerate(self.orders):
            if abs(o - r) < 1e-12:
                return self.norms[:, i]
        raise KeyError(f"order {r} not recorded (have {self.orders})")

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(f"# config_hash={self.config_hash} horizon={self.horizon!r}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t"] + [f"r={_fmt_order(r)}" for r in self.orders]
                       + [f"ball_N{_fmt_order(n)}" for n in self.ball_radii])
            for i, t in enumerate(self.times):
                row = [repr(float(t))] + [repr(float(v)) for v in self.norms[i]]
                if self.ball_radii:
                    row += [repr(float(v)) for v in self.balls[i]]
                w.writerow(row)


def _fmt_order(r):
    r = float(r)
    return str(int(r)) if r.is_integer() else repr(r)


def record_moments(H: Hamiltonian, initial: LatticeState, orders: Sequence[float], times: Sequence[float],
                   ball_radii: Sequence[float] = (), propagator: Optional[Propagator] = None,
                   horizon: float = math.inf, config_hash: str = "") -> MomentSeries:
    """Propagate once through ``times`` and record ``||psi(t)||_r`` and ball masses.

    Order 0 is always recorded (unitarity witness).
    """
    times = np.asarray(times, dtype=float)
    if np.any(np.diff(times) <= 0):
        raise ValueError("sample times must be strictly increasing")
    if len(times) and (times[0] < 0 or times[-1] > horizon):
        raise HorizonError(f"sample times must lie in [0, {horizon}] (light-cone horizon)")
    orders = sorted(set([0.0] + [float(r) for r in orders]))
    if orders[-1] > MAX_ORDER:
        raise ValueError(f"moment orders are capped at {MAX_ORDER}")
    prop = propagator or Propagator(H)
    g = H.geometry
    x = initial.amplitudes.copy()
    t_now = 0.0
    norms = np.empty((len(times), len(orders)))
    balls = np.empty((len(times), len(ball_radii)))
    for i, t in enumerate(times):
        x = prop.advance(x, t - t_now)
        t_now = t
        norms[i] = weighted_norms(x, g, orders)
        balls[i] = ball_probabilities(x, g, ball_radii)
    return MomentSeries(orders, times, norms, list(ball_radii), balls, horizon, config_hash)


# -- exponent fits ----------------------------------------------------------


@dataclass
class ExponentFit:
    r: float
    t_lo: float
    t_hi: float
    slope: float
    intercept: float
    residual_rms: float
    slope_spread: float
    ratio_min: float
    ratio_max: float
    samples: int
    ballistic: bool

    def as_dict(self):
        return asdict(self)


def fit_transport_exponent(series: MomentSeries, r: float, window=None, tol: float = 0.05,
                           min_samples: int = 8) -> ExponentFit:
    """Least-squares slope of ``log ||psi(t)||_r`` against ``r log t``.

    Also reports the band of ``||psi(t)||_r / t^r`` over the window and the
    spread of slopes fitted on three equal sub-windows (in log t).
    """
    if r <= 0:
        raise ValueError("exponent fits need r > 0")
    t = series.times
    lo, hi = window if window is not None else (10.0, 0.8 * series.horizon)
    if lo < 1:
        raise ValueError("fit window must start at t >= 1")
    sel = (t >= lo) & (t <= hi)
    if sel.sum() < min_samples:
        raise ValueError(f"fit window [{lo}, {hi}] holds {int(sel.sum())} samples, need {min_samples}")
    y = series.column(r)[sel]
    if np.any(y <= 0):
        raise ValueError("zero norm in fit window")
    x = r * np.log(t[sel])
    ly = np.log(y)
    slope, intercept = np.polyfit(x, ly, 1)
    resid = ly - (slope * x + intercept)
    edges = np.linspace(x[0], x[-1], 4)
    subs = []
    for a, b in zip(edges[:-1], edges[1:]):
        s = (x >= a) & (x <= b)
        if s.sum() >= 3:
            subs.append(np.polyfit(x[s], ly[s], 1)[0])
    ratio = y / t[sel] ** r
    return ExponentFit(
        r=float(r), t_lo=float(t[sel][0]), t_hi=float(t[sel][-1]), slope=float(slope),
        intercept=float(intercept), residual_rms=float(np.sqrt(np.mean(resid**2))),
        slope_spread=float(max(subs) - min(subs)) if subs else 0.0,
        ratio_min=float(ratio.min()), ratio_max=float(ratio.max()), samples=int(sel.sum()),
        ballistic=bool(abs(slope - 1.0) <= tol),
    )


# -- upper bounds ---------------------------------------------------------------


@dataclass
class UpperBoundReport:
    c1: float
    c2_min: float
    c2_proof: float
    kappa2: float
    c2_corrected: float
    order1_violations: int
    order1_min_slack: float
    order2_within_proof: bool
    order2_corrected_violations: int
    times: np.ndarray = field(repr=False, default=None)
    envelope1: np.ndarray = field(repr=False, default=None)
    envelope2: np.ndarray = field(repr=False, default=None)

    @property
    def violation(self) -> bool:
        return self.order1_violations > 0

    def as_dict(self):
        return {
            "c1": self.c1,
            "c2_min": self.c2_min,
            "c2_proof": self.c2_proof,
            "kappa2": self.kappa2,
            "c2_corrected": self.c2_corrected,
            "order1_violations": self.order1_violations,
            "order1_min_slack": self.order1_min_slack,
            "order2_within_proof": self.order2_within_proof,
            "order2_corrected_violations": self.order2_corrected_violations,
        }


def check_upper_bounds(series: MomentSeries, H: Hamiltonian, u: LatticeState, c1: Optional[float] = None,
                       kappa2: Optional[float] = None, rel_slack: float = 1e-12) -> UpperBoundReport:
    """Order-1 and order-2 ballistic envelopes.

    Order 1: ``||psi(t)||_1 <= ||u||_1 + c1 ||u||_0 t`` with ``c1 ~ ||[Q, H]||``.
    Order 2: the smallest ``c2`` with ``||psi(t)||_2 <= ||u||_2 + ||u||_1 t + c2 ||u||_0 t^2``
    over samples with ``t >= 1``, compared with ``c1 / 2``.  The corrected
    envelope carries the stencil constant ``kappa2 = ||[H, Q^2] Q^{-1}||``:
    ``||u||_2 + kappa2 ||u||_1 t + (kappa2 c1 / 2) ||u||_0 t^2``.
    """
    for r in (1.0, 2.0):
        series.column(r)
    g = H.geometry
    if c1 is None:
        c1 = commutator_norm(H)
    if kappa2 is None:
        kappa2 = weighted_commutator_norm(g, 2)
    u0, u1, u2 = weighted_norms(u.amplitudes, g, [0.0, 1.0, 2.0])
    t = series.times
    n1, n2 = series.column(1.0), series.column(2.0)
    env1 = u1 + c1 * u0 * t
    slack1 = env1 - n1
    viol1 = int(np.sum(slack1 < -rel_slack * env1))
    late = t >= 1.0
    c2 = ((n2[late] - u2 - u1 * t[late]) / (u0 * t[late] ** 2)).max() if late.any() else 0.0
    env2 = u2 + u1 * t + c1 / 2 * u0 * t**2
    env2c = u2 + kappa2 * u1 * t + kappa2 * c1 / 2 * u0 * t**2
    return UpperBoundReport(
        c1=float(c1), c2_min=float(c2), c2_proof=float(c1 / 2), kappa2=float(kappa2),
        c2_corrected=float(kappa2 * c1 / 2), order1_violations=viol1,
        order1_min_slack=float(slack1.min()), order2_within_proof=bool(c2 <= c1 / 2),
        order2_corrected_violations=int(np.sum(n2 > env2c * (1 + rel_slack))),
        times=t, envelope1=env1, envelope2=env2,
    )


# -- moment inequalities --------------------------------------------------------


def jensen_violations(norms: np.ndarray, orders: Sequence[float], slack: float = 1e-12) -> int:
    """Count rows breaking ``m_{r'} >= m_r^{r'/r}`` for normalized second moments.

    ``norms`` has shape ``(T, len(orders))`` and must include order 0.
    """
    norms = np.atleast_2d(norms)
    orders = list(orders)
    i0 = orders.index(0.0)
    bad = 0
    m = (norms / norms[:, [i0]]) ** 2
    pos = [i for i, r in enumerate(orders) if r > 0]
    for a in pos:
        for b in pos:
            r, rp = orders[a], orders[b]
            if rp <= r:
                continue
            lhs = m[:, b]
            rhs = m[:, a] ** (rp / r)
            bad += int(np.sum(lhs < rhs * (1 - slack)))
    return bad


def interpolation_violations(norms_m, norms_r, norms_m1, m: float, r: float, slack: float = 1e-12) -> int:
    """Count breaches of ``||psi||_r^2 <= ||psi||_m^{2(m+1-r)} ||psi||_{m+1}^{2(r-m)}``."""
    lhs = np.asarray(norms_r) ** 2
    rhs = np.asarray(norms_m) ** (2 * (m + 1 - r)) * np.asarray(norms_m1) ** (2 * (r - m))
    return int(np.sum(lhs > rhs * (1 + slack)))


# -- Heisenberg expansion of ||Q psi(t)||^2 ---------------------------------------


@dataclass
class HeisenbergReport:
    times: np.ndarray = field(repr=False)
    lhs: np.ndarray = field(repr=False)
    rhs: np.ndarray = field(repr=False)
    integral: np.ndarray = field(repr=False)
    max_defect: float = 0.0
    max_imag: float = 0.0
    step: float = 0.0
    projected_norm_sq: float = 0.0
    theta_eff: float = float("nan")
    lower_bound_ok: bool = True
    lower_bound_min_slack: float = float("nan")

    def as_dict(self):
        return {
            "max_defect": self.max_defect,
            "max_imag": self.max_imag,
            "quadrature_step": self.step,
            "projected_norm_sq": self.projected_norm_sq,
            "theta_eff": self.theta_eff,
            "lower_bound_ok": self.lower_bound_ok,
            "lower_bound_min_slack": self.lower_bound_min_slack,
        }


class QuadratureError(RuntimeError):
    pass


def _simpson_weighted(f, t, h):
    """``int_0^t (t - s) f(s) ds`` by composite Simpson with step close to ``h``."""
    if t == 0:
        return 0.0
    n = max(2, int(math.ceil(t / h)))
    n += n % 2
    s = np.linspace(0.0, t, n + 1)
    w = np.ones(n + 1)
    w[1:-1:2] = 4
    w[2:-1:2] = 2
    vals = (t - s) * f(s)
    return float((t / n) / 3.0 * np.dot(w, vals))


def heisenberg_expansion_check(decomposition, H: Hamiltonian, interval, u: LatticeState, times: Sequence[float],
                               step: float = 1.0 / 64, theta_eff: Optional[float] = None,
                               max_halvings: int = 8) -> HeisenbergReport:
    """Compare ``||Q e^{-itH} chi_I u||^2`` with its second-order Heisenberg expansion.

    The double integral ``int_0^t int_0^s g(sigma) dsigma ds`` is evaluated as
    ``int_0^t (t - sigma) g(sigma) dsigma``; the step is halved until two
    successive values agree to three digits.
    """
    g = H.geometry
    w1 = g.weights(1.0)
    v0 = decomposition.project(u.amplitudes.astype(np.complex128), interval)
    lam = decomposition.eigenvalues
    U = decomposition.eigenvectors
    coef = U.T @ v0

    def evolve(s):
        return U @ (np.exp(-1j * s * lam) * coef)

    # integrand in the eigenbasis: M_kl = <v_k, [H,[H,-Q^2]] v_l>
    sel = np.abs(coef) > 0
    Us = U[:, sel]
    Mk = Us.T @ double_commutator_array(Us, H)
    cs, ls = coef[sel], lam[sel]

    def integrand(sig):
        sig = np.atleast_1d(sig)
        a = cs[None, :] * np.exp(-1j * np.outer(sig, ls))
        return np.real(np.einsum("si,ij,sj->s", a.conj(), Mk, a))

    q2 = float(np.real(np.vdot(v0, w1 * v0)))
    first = np.vdot(v0, dilation_array(v0, g))  # purely imaginary: the stencil is antisymmetric
    times = np.asarray(times, dtype=float)
    lhs = np.array([float(np.real(np.vdot(x, w1 * x))) for x in (evolve(t) for t in times)])
    integral = np.empty_like(times)
    used = step
    for i, t in enumerate(times):
        h = step
        prev = _simpson_weighted(integrand, t, h)
        for _ in range(max_halvings):
            h /= 2
            cur = _simpson_weighted(integrand, t, h)
            converged = abs(cur - prev) <= 1e-3 * max(abs(cur), 1e-300) or abs(cur - prev) < 1e-13
            prev = cur
            if converged:
                break
        else:
            raise QuadratureError(f"quadrature at t={t} did not stabilize")
        integral[i] = prev
        used = min(used, h)
    rhs_c = q2 - 1j * times * first + integral
    rhs = np.real(rhs_c)
    report = HeisenbergReport(
        times=times, lhs=lhs, rhs=rhs, integral=integral,
        max_defect=float(np.abs(lhs - rhs).max()), max_imag=float(np.abs(np.imag(rhs_c)).max()),
        step=used, projected_norm_sq=float(np.real(np.vdot(v0, v0))),
    )
    if theta_eff is not None:
        bound = theta_eff / 2 * report.projected_norm_sq * times**2
        slack = integral - bound
        report.theta_eff = float(theta_eff)
        report.lower_bound_min_slack = float(slack.min())
        report.lower_bound_ok = bool(np.all(slack >= -1e-9 * np.maximum(bound, 1.0)))
    return report


# -- cross terms between disjoint windows --------------------------------------------


@dataclass
class CrossTermReport:
    times: np.ndarray = field(repr=False)
    c_ij: np.ndarray = field(repr=False)
    norm_i: np.ndarray = field(repr=False)
    norm_j: np.ndarray = field(repr=False)
    norm_sum: np.ndarray = field(repr=False)
    almost_orthog_fraction: float = 0.0
    nu_bound: float = 0.0
    bound_violations: int = 0
    relative_to_t0: np.ndarray = field(repr=False, default=None)

    def as_dict(self):
        return {
            "almost_orthog_fraction": self.almost_orthog_fraction,
            "nu_bound": self.nu_bound,
            "bound_violations": self.bound_violations,
            "max_abs_c": float(np.abs(self.c_ij).max()),
        }


def cross_term_series(decomposition, I, J, u: LatticeState, times: Sequence[float]) -> CrossTermReport:
    """``C_{I,J}(t) = <Q e^{-itH} chi_I u, Q e^{-itH} chi_J u>`` on a time grid."""
    if not I.disjoint(J):
        raise ValueError("cross terms need disjoint windows")
    g = decomposition.geometry
    q = np.sqrt(g.weights(1.0))
    w1 = g.weights(1.0)
    a0 = decomposition.project(u.amplitudes, I)
    b0 = decomposition.project(u.amplitudes, J)
    times = np.asarray(times, dtype=float)
    c = np.empty(len(times), dtype=complex)
    ni, nj, ns = (np.empty(len(times)) for _ in range(3))
    for k, t in enumerate(times):
        a = q * decomposition.evolve(a0, t)
        b = q * decomposition.evolve(b0, t)
        c[k] = np.vdot(a, b)
        ni[k], nj[k], ns[k] = np.linalg.norm(a), np.linalg.norm(b), np.linalg.norm(a + b)
    nu = 0.5 * (np.dot(w1, np.abs(a0) ** 2) + np.dot(w1, np.abs(b0) ** 2))
    c0 = abs(np.vdot(q * a0, q * b0))
    ok = ns > 0.5 * np.maximum(ni, nj)
    return CrossTermReport(
        times, c, ni, nj, ns, float(ok.mean()) if len(ok) else 0.0, float(nu),
        int(np.sum(np.abs(c) > nu * (1 + 1e-12))),
        np.abs(c) / c0 if c0 > 0 else np.full(len(times), np.nan),
    )


# -- RAGE-style diagnostics ---------------------------------------------------------


def rage_diagnostics(series: MomentSeries) -> dict:
    """Sup, running time average and late trend of the in-ball probabilities.

    Labels only: a finite box cannot realize the t -> infinity limits.
    """
    if len(series.ball_radii) < 2:
        raise ValueError("RAGE diagnostics need ball probabilities for at least two radii")
    t = series.times
    out = {}
    for i, N in enumerate(series.ball_radii):
        p = series.balls[:, i]
        # trapezoidal running average over [0, T]
        cum = np.concatenate([[0.0], np.cumsum(0.5 * (p[1:] + p[:-1]) * np.diff(t))])
        avg = np.where(t > 0, cum / np.where(t > 0, t, 1.0), p)
        half = t >= 0.5 * t[-1]
        trend = float(np.polyfit(t[half], p[half], 1)[0]) if half.sum() >= 2 else 0.0
        sup = float(p.max())
        tail_sup = float(p[half].max())
        if tail_sup >= 0.9:
            verdict = "pp-like (mass stays in ball)"
        elif avg[-1] <= 0.05:
            verdict = "continuous-like (time average decays)"
        else:
            verdict = "inconclusive"
        out[f"N={_fmt_order(N)}"] = {
            "sup": sup,
            "tail_sup": tail_sup,
            "time_average_final": float(avg[-1]),
            "time_average_curve": [float(a) for a in avg],
            "late_trend": trend,
            "final": float(p[-1]),
            "verdict": verdict,
        }
    return out
