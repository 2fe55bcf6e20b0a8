"""Time evolution ``psi(t) = exp(-i t H) psi(0)``.

Production path: Chebyshev expansion of the rescaled Hamiltonian with Bessel
coefficients.  Oracle path: full dense eigendecomposition.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict

import numpy as np

from . import kernels
from .lattice import BoxGeometry, LatticeState
from .operators import Hamiltonian, _check


class NormDriftError(RuntimeError):
    """Raised when the propagated norm drifts; signals a bad spectral bracket."""


NORM_DRIFT_ABORT = 1e-9


@dataclass(frozen=True)
class SpectralBounds:
    e_min: float
    e_max: float

    def __post_init__(self):
        if not self.e_max > self.e_min:
            raise ValueError("spectral bounds need e_max > e_min")

    @property
    def center(self) -> float:
        return 0.5 * (self.e_max + self.e_min)

    @property
    def half_width(self) -> float:
        return 0.5 * (self.e_max - self.e_min)


def estimate_spectral_bounds(H: Hamiltonian) -> SpectralBounds:
    """``+-(2d + ||V||_inf)`` widened by a relative margin of 1e-6."""
    d, vs = H.geometry.d, H.potential.sup_norm
    margin = 1e-6 * (4 * d + 2 * vs)
    return SpectralBounds(-2 * d - vs - margin, 2 * d + vs + margin)


def bessel_j_sequence(x: float, kmax: int) -> np.ndarray:
    """``J_0(x), ..., J_kmax(x)`` by Miller's downward recurrence.

    Normalized with ``J_0 + 2 sum_k J_2k = 1``.  Valid for ``x >= 0``.
    """
    if x < 0:
        raise ValueError("argument must be nonnegative")
    out = np.zeros(kmax + 1)
    if x == 0.0:
        out[0] = 1.0
        return out
    # start well above both kmax and the turning point x
    start = int(max(kmax, x) + 30 + 2 * math.sqrt(max(kmax, x) * 40))
    start += start % 2
    vals = np.zeros(start + 2)
    vals[start] = 1e-300
    for k in range(start, 0, -1):
        vals[k - 1] = (2.0 * k / x) * vals[k] - vals[k + 1]
        if abs(vals[k - 1]) > 1e250:
            vals[k - 1 :] *= 1e-250
    norm = vals[0] + 2.0 * vals[2::2].sum()
    out[:] = vals[: kmax + 1] / norm
    return out


@dataclass(frozen=True)
class ChebyshevPlan:
    """Coefficients of one step ``exp(-i tau H)`` for fixed spectral bounds."""

    bounds: SpectralBounds
    tau: float
    tolerance: float
    coefficients: np.ndarray = field(repr=False)

    @property
    def order(self) -> int:
        """Truncation order K: terms ``0..K`` are used."""
        return len(self.coefficients) - 1

    @property
    def phase(self) -> complex:
        return complex(np.exp(-1j * self.tau * self.bounds.center))

    def reversed(self) -> "ChebyshevPlan":
        """Plan for ``exp(+i tau H)``; H is real so coefficients conjugate."""
        return ChebyshevPlan(self.bounds, -self.tau, self.tolerance, np.conj(self.coefficients))


def plan_chebyshev(bounds: SpectralBounds, tau: float, tolerance: float = 1e-14) -> ChebyshevPlan:
    if tau < 0:
        raise ValueError("time step must be nonnegative")
    if not 0 < tolerance < 1:
        raise ValueError("tolerance must lie in (0, 1)")
    x = bounds.half_width * tau
    if x == 0.0:
        return ChebyshevPlan(bounds, tau, tolerance, np.array([1.0 + 0j]))
    cap = int(10 * (x + 50))
    j = bessel_j_sequence(x, cap)
    mags = 2.0 * np.abs(j)
    mags[0] = abs(j[0])
    above = np.nonzero(mags > tolerance)[0]
    K = max(int(above[-1]) + 1, math.ceil(x))
    if K >= cap:
        raise ValueError(f"tolerance {tolerance} not reachable below order cap {cap}")
    k = np.arange(K + 1)
    coeffs = np.where(k == 0, 1.0, 2.0) * ((-1j) ** (k % 4)) * j[: K + 1]
    return ChebyshevPlan(bounds, tau, tolerance, coeffs)


def _step(H, plan, x):
    g = H.geometry
    y = kernels.chebyshev_series(
        x, H.v, plan.bounds.center, plan.bounds.half_width, plan.coefficients, g.d, g.side
    )
    return plan.phase * y


def propagate(H: Hamiltonian, plan: ChebyshevPlan, state: LatticeState) -> LatticeState:
    """One step of length ``plan.tau``."""
    _check(H, state)
    x = state.amplitudes
    n0 = np.linalg.norm(x)
    y = _step(H, plan, x)
    _guard(n0, np.linalg.norm(y))
    return LatticeState(state.geometry, y)


def _guard(n0, n1):
    if abs(n1 - n0) > NORM_DRIFT_ABORT * max(n0, 1e-300):
        raise NormDriftError(f"norm drifted from {n0!r} to {n1!r}; spectral bounds violated?")


class Propagator:
    """Evolve by arbitrary times, reusing one plan for full steps.

    The default step makes ``half_width * tau`` about 20.
    """

    def __init__(self, H: Hamiltonian, tau: float | None = None, tolerance: float = 1e-14,
                 bounds: SpectralBounds | None = None):
        self.H = H
        self.bounds = bounds or estimate_spectral_bounds(H)
        self.tau = float(tau) if tau else 20.0 / self.bounds.half_width
        self.tolerance = tolerance
        self.plan = plan_chebyshev(self.bounds, self.tau, tolerance)
        self._plans: Dict[float, ChebyshevPlan] = {self.tau: self.plan}

    def _plan(self, dt):
        p = self._plans.get(dt)
        if p is None:
            p = plan_chebyshev(self.bounds, dt, self.tolerance)
            self._plans[dt] = p
        return p

    def advance(self, x: np.ndarray, dt: float) -> np.ndarray:
        """Return ``exp(-i dt H) x`` for ``dt`` of either sign."""
        if dt == 0:
            return np.array(x, dtype=np.complex128)
        sign = 1.0 if dt > 0 else -1.0
        rest = abs(dt)
        n0 = np.linalg.norm(x)
        y = np.asarray(x, dtype=np.complex128)
        nfull = int(rest // self.tau)
        rem = rest - nfull * self.tau
        if rem < 1e-12 * self.tau:
            rem = 0.0
        plans = [self.plan] * nfull + ([self._plan(rem)] if rem > 0 else [])
        for p in plans:
            y = _step(self.H, p if sign > 0 else p.reversed(), y)
            _guard(n0, np.linalg.norm(y))
        return y

    def evolve(self, state: LatticeState, dt: float) -> LatticeState:
        _check(self.H, state)
        return LatticeState(state.geometry, self.advance(state.amplitudes, dt))


def dense_oracle_propagate(decomposition, state: LatticeState, t: float) -> LatticeState:
    """``U exp(-i t Lambda) U^T psi`` from a full eigendecomposition."""
    if state.geometry != decomposition.geometry:
        raise ValueError("state and decomposition live on different boxes")
    return LatticeState(state.geometry, decomposition.evolve(state.amplitudes, t))


def light_cone_horizon(geometry: BoxGeometry, initial_support_radius: int, safety: float = 0.9) -> float:
    """Latest faithful time ``safety (L - r0) / (2 d)``; group speed per axis is 2."""
    if not 0 < safety < 1:
        raise ValueError("safety must lie in (0, 1)")
    if not 0 <= initial_support_radius < geometry.L:
        raise ValueError("initial support must lie strictly inside the box")
    return safety * (geometry.L - initial_support_radius) / (2.0 * geometry.d)
