"""Dense spectral oracle: eigenpairs, projections and Mourre forms on energy windows.

A finite box has pure point spectrum.  Two consequences shape this module:

* the absolutely continuous subspace is replaced by the span of delocalized,
  boundary-light eigenmodes (:func:`ac_surrogate_projection`);
* the bracket ``[H_box, [H_box, -Q^2]]`` of the truncated matrices has zero
  diagonal in the eigenbasis of ``H_box`` (the expectation of ``[H_box, A]``
  in an eigenstate vanishes), so its window-restricted minimum is never
  positive.  Mourre forms are therefore evaluated with the interior-exact
  operator ``2 sum_j (4 - Lap_j^2) + [V, [H, -Q^2]]``, which coincides with
  the box bracket away from the outer two layers of sites.  The bare
  box-bracket value is still reported as ``min_rayleigh_box``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
import scipy.linalg

from .lattice import BoxGeometry, LatticeState
from .operators import (
    DENSE_CAP,
    DenseCapError,
    Hamiltonian,
    dense_compact_correction,
    dense_double_commutator,
    dense_hamiltonian,
    dense_mourre_operator,
    free_double_commutator_closed_form,
    materialize_dense,
    operator_norm,
)

ENDPOINT_TOL = 1e-12


class EmptyIntervalError(ValueError):
    pass


@dataclass(frozen=True)
class EnergyInterval:
    lo: float
    hi: float
    lo_closed: bool = False
    hi_closed: bool = False

    def __post_init__(self):
        if self.lo > self.hi or (self.lo == self.hi and not (self.lo_closed and self.hi_closed)):
            raise ValueError(f"empty energy interval ({self.lo}, {self.hi})")

    @classmethod
    def j_theta(cls, d: int, theta: float) -> "EnergyInterval":
        """``]-2d + theta, 2d - theta[``.

        ``theta = 2d`` gives the closed one-point window ``{0}`` at band
        centre (limit of the shrinking family).
        """
        if not 0 < theta <= 2 * d:
            raise ValueError(f"theta must lie in (0, 2d] = (0, {2 * d}], got {theta}")
        if theta == 2 * d:
            return cls(0.0, 0.0, True, True)
        return cls(-2 * d + theta, 2 * d - theta)

    @classmethod
    def whole_line(cls) -> "EnergyInterval":
        return cls(-math.inf, math.inf)

    def contains(self, energies, tol: float = ENDPOINT_TOL) -> np.ndarray:
        e = np.asarray(energies)
        lo = e >= self.lo - tol if self.lo_closed else e > self.lo + tol
        hi = e <= self.hi + tol if self.hi_closed else e < self.hi - tol
        return lo & hi

    def intersect(self, other: "EnergyInterval") -> Optional["EnergyInterval"]:
        if self.lo > other.lo or (self.lo == other.lo and not self.lo_closed):
            lo, lo_c = self.lo, self.lo_closed
        else:
            lo, lo_c = other.lo, other.lo_closed
        if self.hi < other.hi or (self.hi == other.hi and not self.hi_closed):
            hi, hi_c = self.hi, self.hi_closed
        else:
            hi, hi_c = other.hi, other.hi_closed
        if lo > hi or (lo == hi and not (lo_c and hi_c)):
            return None
        return EnergyInterval(lo, hi, lo_c, hi_c)

    def disjoint(self, other: "EnergyInterval") -> bool:
        return self.intersect(other) is None

    def as_dict(self) -> dict:
        return {"lo": self.lo, "hi": self.hi, "lo_closed": self.lo_closed, "hi_closed": self.hi_closed}


@dataclass
class SpectralDecomposition:
    geometry: BoxGeometry
    eigenvalues: np.ndarray = field(repr=False)
    eigenvectors: np.ndarray = field(repr=False)
    residual: float = 0.0
    orthonormality: float = 0.0

    def mask(self, interval: EnergyInterval) -> np.ndarray:
        return interval.contains(self.eigenvalues)

    def basis(self, interval: EnergyInterval) -> np.ndarray:
        return self.eigenvectors[:, self.mask(interval)]

    def project(self, x, interval_or_mask) -> np.ndarray:
        m = interval_or_mask if isinstance(interval_or_mask, np.ndarray) else self.mask(interval_or_mask)
        P = self.eigenvectors[:, m]
        return P @ (P.T @ x)

    def evolve(self, x, t: float) -> np.ndarray:
        U = self.eigenvectors
        return U @ (np.exp(-1j * t * self.eigenvalues) * (U.T @ x))

    def projector(self, interval_or_mask) -> np.ndarray:
        m = interval_or_mask if isinstance(interval_or_mask, np.ndarray) else self.mask(interval_or_mask)
        P = self.eigenvectors[:, m]
        return P @ P.T


def dense_eigendecomposition(H: Hamiltonian, cap: int = DENSE_CAP) -> SpectralDecomposition:
    if H.geometry.total_sites > cap:
        raise DenseCapError(f"{H.geometry.total_sites} sites exceed the dense cap of {cap}")
    A = dense_hamiltonian(H, cap).matrix
    try:
        w, U = scipy.linalg.eigh(A)
    except np.linalg.LinAlgError as exc:  # pragma: no cover
        raise RuntimeError(f"eigensolver failed: {exc}") from exc
    res = float(np.abs(A @ U - U * w).max()) if len(w) else 0.0
    orth = float(np.abs(U.T @ U - np.eye(len(w))).max()) if len(w) else 0.0
    return SpectralDecomposition(H.geometry, w, U, res, orth)


def dirichlet_eigenvalues_1d(L: int) -> np.ndarray:
    """Closed form ``-2 cos(k pi / (2L + 2))``, ``k = 1..2L+1``, ascending."""
    k = np.arange(1, 2 * L + 2)
    return -2.0 * np.cos(k * np.pi / (2 * L + 2))


def spectral_projection_apply(decomposition, interval: EnergyInterval, state: LatticeState) -> LatticeState:
    return LatticeState(state.geometry, decomposition.project(state.amplitudes, interval))


# -- delocalization / a.c. surrogate -------------------------------------------


@dataclass
class ModeDelocalization:
    ipr: np.ndarray = field(repr=False)
    boundary_weight: np.ndarray = field(repr=False)


def mode_delocalization(decomposition: SpectralDecomposition, layer: int = 2) -> ModeDelocalization:
    U = decomposition.eigenvectors
    p = U**2
    edge = decomposition.geometry.boundary_distance() <= layer
    return ModeDelocalization(ipr=(p**2).sum(axis=0), boundary_weight=p[edge].sum(axis=0))


@dataclass
class SurrogateProjector:
    """Orthogonal projector onto the selected eigenmodes."""

    mask: np.ndarray = field(repr=False)
    basis: np.ndarray = field(repr=False)
    candidates: int = 0

    @property
    def empty(self) -> bool:
        return self.basis.shape[1] == 0

    @property
    def rank(self) -> int:
        return self.basis.shape[1]

    @property
    def pass_fraction(self) -> float:
        return self.rank / self.candidates if self.candidates else 0.0

    def apply(self, x):
        return self.basis @ (self.basis.T @ x)

    def matrix(self):
        return self.basis @ self.basis.T


def ac_surrogate_projection(decomposition, interval: EnergyInterval, ipr_threshold: float,
                            boundary_threshold: float) -> SurrogateProjector:
    for name, val in (("ipr_threshold", ipr_threshold), ("boundary_threshold", boundary_threshold)):
        if not 0 < val < 1:
            raise ValueError(f"{name} must lie in (0, 1)")
    inside = decomposition.mask(interval)
    deloc = mode_delocalization(decomposition)
    keep = inside & (deloc.ipr <= ipr_threshold) & (deloc.boundary_weight <= boundary_threshold)
    return SurrogateProjector(keep, decomposition.eigenvectors[:, keep], int(inside.sum()))


# -- Mourre forms --------------------------------------------------------------


@dataclass
class MourreForm:
    interval: EnergyInterval
    dimension: int
    min_rayleigh: float
    witness: np.ndarray = field(repr=False)
    min_rayleigh_box: float = float("nan")
    symmetry_defect: float = 0.0


class _DenseCache:
    """Per-Hamiltonian dense matrices, reused across windows in a scan."""

    def __init__(self, H):
        self.H = H
        self._m = {}

    def get(self, key):
        if key not in self._m:
            H = self.H
            self._m[key] = {
                "mourre": lambda: dense_mourre_operator(H).matrix,
                "free": lambda: materialize_dense(
                    lambda x: free_double_commutator_closed_form(x, H.geometry), H.geometry, "free"
                ).matrix,
                "box": lambda: dense_double_commutator(H).matrix,
                "compact": lambda: dense_compact_correction(H).matrix,
            }[key]()
        return self._m[key]


def _restricted(P, M):
    A = P.T @ M @ P
    sym = float(np.abs(A - A.T).max()) if A.size else 0.0
    return 0.5 * (A + A.T), sym


def _min_eig(A):
    if A.shape[0] == 0:
        raise EmptyIntervalError("energy window contains no eigenvalue")
    w, v = np.linalg.eigh(A)
    return float(w[0]), v[:, 0]


def mourre_form_min(decomposition, H: Hamiltonian, interval: EnergyInterval, cache=None) -> MourreForm:
    """Smallest eigenvalue of the Mourre operator compressed to ``Ran chi_I(H)``."""
    cache = cache or _DenseCache(H)
    P = decomposition.basis(interval)
    if P.shape[1] == 0:
        raise EmptyIntervalError(f"no eigenvalue of H in {interval}")
    A, sym = _restricted(P, cache.get("mourre"))
    lam, vec = _min_eig(A)
    B, _ = _restricted(P, cache.get("box"))
    lam_box, _ = _min_eig(B)
    return MourreForm(interval, P.shape[1], lam, P @ vec, lam_box, sym)


@dataclass
class CompactSplitReport:
    interval: EnergyInterval
    theta: float
    dimension: int
    min_rayleigh_free: float
    min_rayleigh_free_reference: float
    min_rayleigh_full: float
    compact_norm: float
    certified_bound: float
    decay_hypothesis: bool

    def as_dict(self) -> dict:
        return {
            "interval": self.interval.as_dict(),
            "theta": self.theta,
            "dimension": self.dimension,
            "min_rayleigh": self.min_rayleigh_full,
            "min_rayleigh_free": self.min_rayleigh_free,
            "min_rayleigh_free_reference": self.min_rayleigh_free_reference,
            "compact_norm": self.compact_norm,
            "certified_bound": self.certified_bound,
            "decay_hypothesis": self.decay_hypothesis,
        }


def mourre_compact_split(decomposition_free, decomposition_full, H: Hamiltonian, interval: EnergyInterval,
                         theta: float = float("nan"), cache=None) -> CompactSplitReport:
    """Split the Mourre form on ``chi_I(H)`` into free part and ``K = [V, [H, -Q^2]]``.

    ``certified_bound = min eig(P^T M_free P) - ||P^T K P||`` is a rigorous
    lower bound for the full compressed form (Weyl).
    """
    from .potentials import satisfies_decay_hypothesis

    cache = cache or _DenseCache(H)
    P = decomposition_full.basis(interval)
    if P.shape[1] == 0:
        raise EmptyIntervalError(f"no eigenvalue of H in {interval}")
    F, _ = _restricted(P, cache.get("free"))
    K, _ = _restricted(P, cache.get("compact"))
    free_min, _ = _min_eig(F)
    full_min, _ = _min_eig(F + K)
    knorm = float(np.abs(np.linalg.eigvalsh(K)).max())
    Pf = decomposition_free.basis(interval)
    ref = _min_eig(_restricted(Pf, cache.get("free"))[0])[0] if Pf.shape[1] else float("nan")
    return CompactSplitReport(
        interval, theta, P.shape[1], free_min, ref, full_min, knorm, free_min - knorm,
        satisfies_decay_hypothesis(H.potential),
    )


def shrink_interval_scan(decomposition, H: Hamiltonian, deltas: Sequence[float], e0: float = 0.0,
                         base: Optional[EnergyInterval] = None, theta: float = 1.0, cache=None) -> List[dict]:
    """Compact-term norm on ``I_1(delta) = ]E0 - delta, E0 + delta[ & I`` for each delta."""
    base = base or EnergyInterval.j_theta(H.geometry.d, theta)
    cache = cache or _DenseCache(H)
    rows = []
    for delta in deltas:
        win = EnergyInterval(e0 - delta, e0 + delta).intersect(base)
        P = decomposition.basis(win) if win is not None else np.zeros((H.geometry.total_sites, 0))
        row = {"delta": float(delta), "dimension": int(P.shape[1])}
        if P.shape[1] == 0:
            row.update(compact_norm=0.0, min_rayleigh_free=float("nan"), certified_bound=float("nan"),
                       below_half_theta=True)
        else:
            F, _ = _restricted(P, cache.get("free"))
            K, _ = _restricted(P, cache.get("compact"))
            kn = float(np.abs(np.linalg.eigvalsh(K)).max())
            fm = _min_eig(F)[0]
            row.update(compact_norm=kn, min_rayleigh_free=fm, certified_bound=fm - kn,
                       below_half_theta=kn <= theta / 2)
        rows.append(row)
    norms = [r["compact_norm"] for r in rows]
    order = np.argsort([r["delta"] for r in rows])
    mono = bool(np.all(np.diff(np.asarray(norms)[order]) >= -1e-14))
    for r in rows:
        r["monotone_in_delta"] = mono
    return rows


# -- commutator of Q with a spectral projection --------------------------------


def smooth_window(energies, interval: EnergyInterval, ramp: float) -> np.ndarray:
    """C-infinity bump equal to 1 on the window shrunk by ``ramp``, 0 outside it."""

    def step(s):
        s = np.clip(s, 0.0, 1.0)
        a = np.where(s > 0, np.exp(-1.0 / np.maximum(s, 1e-300)), 0.0)
        b = np.where(s < 1, np.exp(-1.0 / np.maximum(1.0 - s, 1e-300)), 0.0)
        return a / (a + b)

    e = np.asarray(energies)
    return step((e - interval.lo) / ramp) * step((interval.hi - e) / ramp)


def q_projection_commutator_norm(decomposition, interval: EnergyInterval, smooth_ramp: float = 0.0) -> float:
    """``||[Q, f(H)]||`` with ``f`` the sharp window or a smooth bump of given ramp."""
    g = decomposition.geometry
    q = np.sqrt(g.weights(1.0))
    U = decomposition.eigenvectors
    if smooth_ramp > 0:
        f = smooth_window(decomposition.eigenvalues, interval, smooth_ramp)
    else:
        f = decomposition.mask(interval).astype(float)
    F = (U * f) @ U.T
    C = q[:, None] * F - F * q[None, :]
    return operator_norm(lambda x: C @ x, g.total_sites, lambda y: C.T @ y, max_iter=5000, rtol=1e-12)


def dump_eigen_csv(decomposition, path, header: str = "") -> None:
    """Eigenvalue table; ``header`` (if given) is written as a leading ``#`` comment."""
    import csv

    deloc = mode_delocalization(decomposition)
    with open(path, "w", newline="") as fh:
        if header:
            fh.write(f"# {header}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k", "lambda", "ipr", "boundary_weight"])
        for k, (lam, ipr, bw) in enumerate(zip(decomposition.eigenvalues, deloc.ipr, deloc.boundary_weight)):
            w.writerow([k, repr(float(lam)), repr(float(ipr)), repr(float(bw))])
