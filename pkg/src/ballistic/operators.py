"""Matrix-free H = -Lap + V, the weight Q and the commutators built from them.

Every ``*_array`` function acts on raw vectors of shape ``(N,)`` or batches of
shape ``(N, k)``; the ``apply_*`` wrappers take and return
:class:`~ballistic.lattice.LatticeState`.  Boundary condition is Dirichlet:
amplitudes outside the box read as zero.
"""

from __future__ import annotations

import csv
import functools
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import kernels
from .lattice import BoxGeometry, LatticeState

DENSE_CAP = 4096


class GeometryMismatchError(ValueError):
    pass


class DenseCapError(ValueError):
    pass


@dataclass(frozen=True)
class PotentialField:
    geometry: BoxGeometry
    values: np.ndarray = field(repr=False)
    sup_norm: float = field(init=False)
    label: str = "custom"

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64)
        if v.shape != (self.geometry.total_sites,):
            raise ValueError(f"potential has shape {v.shape}, expected ({self.geometry.total_sites},)")
        if not np.all(np.isfinite(v)):
            raise ValueError("potential values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "sup_norm", float(np.abs(v).max()) if v.size else 0.0)

    @classmethod
    def zero(cls, geometry):
        return cls(geometry, np.zeros(geometry.total_sites), label="zero")


@dataclass(frozen=True)
class Hamiltonian:
    """``H = -Lap + V`` with Dirichlet truncation to the box."""

    geometry: BoxGeometry
    potential: Optional[PotentialField] = None
    boundary: str = "dirichlet"

    def __post_init__(self):
        if self.potential is None:
            object.__setattr__(self, "potential", PotentialField.zero(self.geometry))
        elif self.potential.geometry != self.geometry:
            raise GeometryMismatchError("potential and Hamiltonian live on different boxes")

    @property
    def v(self) -> np.ndarray:
        return self.potential.values

    def apply(self, x):
        g = self.geometry
        return kernels.hamiltonian(x, self.v, g.d, g.side)


def _check(H, state):
    if state.geometry != H.geometry:
        raise GeometryMismatchError("state and operator live on different boxes")


def _col(a, x):
    return a if x.ndim == 1 else a[:, None]


# -- stencil coefficient tables ---------------------------------------------


@functools.lru_cache(maxsize=32)
def _q_hop_coeffs(d, L):
    """Forward/backward coefficients ``q(n +- e_j) - q(n)`` of ``[Q, -Lap]``.

    Written as ``(+-2 n_j + 1) / (q(n +- e_j) + q(n))`` to avoid cancellation.
    """
    g = BoxGeometry(d, L)
    c = g.coords.astype(np.float64)
    s = 1.0 + g.radius_sq
    q = np.sqrt(s)
    fwd, bwd = [], []
    for j in range(d):
        a = 2.0 * c[:, j] + 1.0
        b = -2.0 * c[:, j] + 1.0
        fwd.append(a / (np.sqrt(s + a) + q))
        bwd.append(b / (np.sqrt(s + b) + q))
    return tuple(fwd), tuple(bwd)


@functools.lru_cache(maxsize=32)
def _dilation_coeffs(d, L):
    """Integer coefficients ``2n_j + 1`` and ``-(2n_j - 1)`` of ``[H, -Q^2]``."""
    c = BoxGeometry(d, L).coords.astype(np.float64)
    return tuple(2.0 * c[:, j] + 1.0 for j in range(d)), tuple(1.0 - 2.0 * c[:, j] for j in range(d))


def _weight_hop_coeffs(geometry, w):
    d = geometry.d
    grid = w.reshape(geometry.shape)
    fwd, bwd = [], []
    for j in range(d):
        f = np.zeros(geometry.shape)
        b = np.zeros(geometry.shape)
        lo = [slice(None)] * d
        hi = [slice(None)] * d
        lo[j] = slice(0, -1)
        hi[j] = slice(1, None)
        f[tuple(lo)] = grid[tuple(hi)] - grid[tuple(lo)]
        b[tuple(hi)] = grid[tuple(lo)] - grid[tuple(hi)]
        fwd.append(f.ravel())
        bwd.append(b.ravel())
    return fwd, bwd


def _hop(x, geometry, fwd, bwd):
    """``out_n = sum_j fwd_j[n] x_{n+e_j} + bwd_j[n] x_{n-e_j}`` (Dirichlet)."""
    d = geometry.d
    shape = geometry.shape + x.shape[1:]
    g = x.reshape(shape)
    out = np.zeros(shape, dtype=np.result_type(x.dtype, np.float64))
    for j in range(d):
        lo = [slice(None)] * d
        hi = [slice(None)] * d
        lo[j] = slice(0, -1)
        hi[j] = slice(1, None)
        lo, hi = tuple(lo), tuple(hi)
        f = fwd[j].reshape(geometry.shape)
        b = bwd[j].reshape(geometry.shape)
        if x.ndim > 1:
            f = f[..., None]
            b = b[..., None]
        out[lo] += f[lo] * g[hi]
        out[hi] += b[hi] * g[lo]
    return out.reshape(x.shape)


# -- array-level operators ----------------------------------------------------


def laplacian_array(x, geometry):
    return kernels.laplacian(x, geometry.d, geometry.side)


def q_array(x, geometry):
    return _col(np.sqrt(geometry.weights(1.0)), x) * x


def q_squared_array(x, geometry):
    return _col(geometry.weights(1.0), x) * x


def commutator_q_h_array(x, geometry):
    fwd, bwd = _q_hop_coeffs(geometry.d, geometry.L)
    return _hop(x, geometry, fwd, bwd)


def dilation_array(x, geometry):
    fwd, bwd = _dilation_coeffs(geometry.d, geometry.L)
    return _hop(x, geometry, fwd, bwd)


def double_commutator_array(x, H: Hamiltonian):
    g = H.geometry
    return H.apply(dilation_array(x, g)) - dilation_array(H.apply(x), g)


def free_double_commutator_closed_form(x, geometry):
    """``2 sum_j (4 I - Lap_j^2) x`` with each ``Lap_j`` the Dirichlet box operator."""
    d, m = geometry.d, geometry.side
    out = 8.0 * d * x
    for j in range(d):
        lj = kernels.laplacian_axis(x, d, m, j)
        out = out - 2.0 * kernels.laplacian_axis(lj, d, m, j)
    return out


def compact_correction_array(x, H: Hamiltonian):
    """``[V, [H, -Q^2]] x``; vanishes identically when ``V = 0``."""
    g = H.geometry
    v = _col(H.v, x)
    return v * dilation_array(x, g) - dilation_array(v * x, g)


def mourre_operator_array(x, H: Hamiltonian):
    """Interior-exact Mourre operator: free closed form plus ``[V, [H, -Q^2]]``.

    Agrees with :func:`double_commutator_array` on sites at distance >= 2 from
    the boundary.  The bare box bracket differs only on the outer layers,
    where the Dirichlet wall injects O(L) entries.
    """
    return free_double_commutator_closed_form(x, H.geometry) + compact_correction_array(x, H)


def commutator_h_qpow_array(x, geometry, m):
    """``[H, Q^m] x = [Q^m, Lap] x`` from explicit weight differences."""
    w = geometry.weights(m / 2.0)
    fwd, bwd = _weight_hop_coeffs(geometry, np.asarray(w))
    return -_hop(x, geometry, fwd, bwd)


# -- state-level wrappers -----------------------------------------------------


def apply_laplacian(state: LatticeState) -> LatticeState:
    return LatticeState(state.geometry, laplacian_array(state.amplitudes, state.geometry))


def apply_hamiltonian(H: Hamiltonian, state: LatticeState) -> LatticeState:
    _check(H, state)
    return LatticeState(state.geometry, H.apply(state.amplitudes))


def apply_weight_q(state: LatticeState) -> LatticeState:
    return LatticeState(state.geometry, q_array(state.amplitudes, state.geometry))


def apply_q_squared(state: LatticeState) -> LatticeState:
    return LatticeState(state.geometry, q_squared_array(state.amplitudes, state.geometry))


def apply_commutator_q_h(H: Hamiltonian, state: LatticeState) -> LatticeState:
    """``[Q, H] psi``; the potential drops out since ``[Q, V] = 0``."""
    _check(H, state)
    return LatticeState(state.geometry, commutator_q_h_array(state.amplitudes, state.geometry))


def apply_dilation(H: Hamiltonian, state: LatticeState) -> LatticeState:
    """``[H, -Q^2] psi`` via the integer-coefficient stencil."""
    _check(H, state)
    return LatticeState(state.geometry, dilation_array(state.amplitudes, state.geometry))


def apply_double_commutator(H: Hamiltonian, state: LatticeState) -> LatticeState:
    _check(H, state)
    return LatticeState(state.geometry, double_commutator_array(state.amplitudes, H))


# -- dense materialization ----------------------------------------------------


@dataclass
class DenseOperator:
    matrix: np.ndarray = field(repr=False)
    tag: str
    geometry: BoxGeometry

    def symmetry_defect(self) -> float:
        return float(np.abs(self.matrix - self.matrix.T).max())

    def antisymmetry_defect(self) -> float:
        return float(np.abs(self.matrix + self.matrix.T).max())

    def to_csv(self, path) -> None:
        """Row-major nonzero entries with header ``n,m,value``."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["n", "m", "value"])
            rows, cols = np.nonzero(self.matrix)
            for i, j in zip(rows, cols):
                w.writerow([int(i), int(j), repr(float(self.matrix[i, j]))])


def materialize_dense(apply: Callable, geometry: BoxGeometry, tag: str, cap: int = DENSE_CAP) -> DenseOperator:
    """Apply ``apply`` to every basis vector ``delta_n`` and stack the columns."""
    n = geometry.total_sites
    if n > cap:
        raise DenseCapError(f"{n} sites exceed the dense cap of {cap}")
    cols = apply(np.eye(n))
    return DenseOperator(np.ascontiguousarray(np.real_if_close(cols), dtype=np.float64), tag, geometry)


def dense_hamiltonian(H: Hamiltonian, cap=DENSE_CAP) -> DenseOperator:
    return materialize_dense(H.apply, H.geometry, "H", cap)


def dense_laplacian(geometry, cap=DENSE_CAP) -> DenseOperator:
    return materialize_dense(lambda x: -laplacian_array(x, geometry), geometry, "-Lap", cap)


def dense_q(geometry, cap=DENSE_CAP) -> DenseOperator:
    return materialize_dense(lambda x: q_array(x, geometry), geometry, "Q", cap)


def dense_q_squared(geometry, cap=DENSE_CAP) -> DenseOperator:
    return materialize_dense(lambda x: q_squared_array(x, geometry), geometry, "Q^2", cap)


def dense_commutator_q_h(H, cap=DENSE_CAP) -> DenseOperator:
    return materialize_dense(lambda x: commutator_q_h_array(x, H.geometry), H.geometry, "[Q,H]", cap)


def dense_dilation(H, cap=DENSE_CAP) -> DenseOperator:
    return materialize_dense(lambda x: dilation_array(x, H.geometry), H.geometry, "[H,-Q^2]", cap)


def dense_double_commutator(H, cap=DENSE_CAP) -> DenseOperator:
    return materialize_dense(lambda x: double_commutator_array(x, H), H.geometry, "[H,[H,-Q^2]]", cap)


def dense_mourre_operator(H, cap=DENSE_CAP) -> DenseOperator:
    return materialize_dense(lambda x: mourre_operator_array(x, H), H.geometry, "mourre", cap)


def dense_compact_correction(H, cap=DENSE_CAP) -> DenseOperator:
    return materialize_dense(lambda x: compact_correction_array(x, H), H.geometry, "[V,[H,-Q^2]]", cap)


# -- norm estimates -----------------------------------------------------------


def operator_norm(apply: Callable, n: int, apply_adjoint: Optional[Callable] = None, *,
                  max_iter: int = 20000, rtol: float = 1e-13, seed: int = 0,
                  method: str = "lanczos") -> float:
    """Largest singular value of a real operator given matrix-free.

    ``method="lanczos"`` runs ARPACK on ``A^T A`` (a Krylov-accelerated power
    iteration); ``method="power"`` is the plain power iteration.  Both start
    from the same seeded random vector, so results are reproducible.

    ``apply_adjoint`` defaults to ``-apply`` (antisymmetric operators, which is
    what every commutator of a symmetric and a diagonal operator is here).
    """
    if apply_adjoint is None:
        def apply_adjoint(y):
            return -apply(y)

    if method not in ("lanczos", "power"):
        raise ValueError(f"unknown method {method!r}")
    rng = np.random.default_rng(seed)
    x = rng.normal(size=n)
    x /= np.linalg.norm(x)
    if method == "lanczos" and n > 2:
        from scipy.sparse.linalg import LinearOperator, eigsh

        op = LinearOperator((n, n), matvec=lambda v: apply_adjoint(apply(np.ravel(v))), dtype=np.float64)
        lam = eigsh(op, k=1, which="LA", v0=x, tol=rtol, maxiter=max_iter,
                    ncv=min(n - 1, 40), return_eigenvectors=False)[0]
        return float(np.sqrt(max(lam, 0.0)))
    est = 0.0
    for _ in range(max_iter):
        y = apply_adjoint(apply(x))
        lam = float(np.dot(x, y))
        ny = np.linalg.norm(y)
        if ny == 0.0:
            return 0.0
        x = y / ny
        if abs(lam - est) <= rtol * abs(lam):
            est = lam
            break
        est = lam
    return float(np.sqrt(max(est, 0.0)))


def commutator_norm(H: Hamiltonian, **kw) -> float:
    """Power-iteration estimate of ``||[Q, H]||``."""
    g = H.geometry
    return operator_norm(lambda x: commutator_q_h_array(x, g), g.total_sites, **kw)


def weighted_commutator_norm(geometry: BoxGeometry, m: int, **kw) -> float:
    """Estimate of ``||[H, Q^m] Q^{-(m-1)}||``, the constant behind the moment bounds."""
    inv = 1.0 / np.sqrt(geometry.weights(m - 1))

    def a(x):
        return commutator_h_qpow_array(inv * x, geometry, m)

    def at(y):
        # [H, Q^m] is antisymmetric; the adjoint of A = C D is D C^T = -D C
        return -inv * commutator_h_qpow_array(y, geometry, m)

    return operator_norm(a, geometry.total_sites, at, **kw)
