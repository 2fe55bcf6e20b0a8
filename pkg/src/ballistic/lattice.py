"""Truncated boxes of Z^d, lattice states and weighted norms."""

from __future__ import annotations

import csv
import functools
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np


class NonFiniteAmplitudeError(ValueError):
    pass


@dataclass(frozen=True)
class BoxGeometry:
    """The box ``{-L, ..., L}^d`` with lexicographic site ordering.

    The last coordinate varies fastest, so in ``d = 2`` the index of
    ``(n_1, n_2)`` is ``(n_1 + L) * (2L + 1) + (n_2 + L)``.
    """

    d: int
    L: int

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise ValueError(f"dimension must be a positive integer, got {self.d!r}")
        if int(self.L) != self.L or self.L < 1:
            raise ValueError(f"radius must be a positive integer, got {self.L!r}")

    @property
    def side(self) -> int:
        return 2 * self.L + 1

    @property
    def total_sites(self) -> int:
        return self.side**self.d

    @property
    def shape(self) -> tuple:
        return (self.side,) * self.d

    def index_of(self, site: Sequence[int]) -> Optional[int]:
        """Lexicographic index of ``site``, or ``None`` when it lies outside."""
        if len(site) != self.d:
            raise ValueError(f"site {tuple(site)} has wrong dimension for d={self.d}")
        idx = 0
        for n_j in site:
            if abs(n_j) > self.L:
                return None
            idx = idx * self.side + (int(n_j) + self.L)
        return idx

    def site_of(self, index: int) -> tuple:
        if not 0 <= index < self.total_sites:
            raise IndexError(f"index {index} outside 0..{self.total_sites - 1}")
        out = []
        for _ in range(self.d):
            index, rem = divmod(index, self.side)
            out.append(rem - self.L)
        return tuple(reversed(out))

    def neighbor(self, site: Sequence[int], axis: int, step: int) -> Optional[tuple]:
        """``site + step * e_axis`` or ``None`` if that leaves the box."""
        n = list(site)
        n[axis] += step
        if abs(n[axis]) > self.L:
            return None
        return tuple(n)

    @property
    def coords(self) -> np.ndarray:
        """Integer array of shape ``(total_sites, d)``, read-only."""
        return _coords(self.d, self.L)

    @property
    def radius_sq(self) -> np.ndarray:
        """``|n|^2`` per site (float), read-only."""
        return _radius_sq(self.d, self.L)

    def weights(self, r: float) -> np.ndarray:
        """``(1 + |n|^2)^r`` per site, cached per ``(geometry, r)``."""
        return _weights(self.d, self.L, float(r))

    def boundary_distance(self) -> np.ndarray:
        """Lattice distance of each site to the outside of the box."""
        c = self.coords
        return (self.L - np.abs(c)).min(axis=1)


@functools.lru_cache(maxsize=64)
def _coords(d, L):
    axes = np.arange(-L, L + 1)
    grids = np.meshgrid(*([axes] * d), indexing="ij")
    c = np.stack([g.ravel() for g in grids], axis=1).astype(np.int64)
    c.setflags(write=False)
    return c


@functools.lru_cache(maxsize=64)
def _radius_sq(d, L):
    c = _coords(d, L)
    r2 = (c.astype(np.float64) ** 2).sum(axis=1)
    r2.setflags(write=False)
    return r2


@functools.lru_cache(maxsize=256)
def _weights(d, L, r):
    w = (1.0 + _radius_sq(d, L)) ** r
    w.setflags(write=False)
    return w


@dataclass
class LatticeState:
    """Complex amplitudes over a box, one per site in lexicographic order."""

    geometry: BoxGeometry
    amplitudes: np.ndarray = field(repr=False)

    def __post_init__(self):
        a = np.asarray(self.amplitudes, dtype=np.complex128)
        if a.shape != (self.geometry.total_sites,):
            raise ValueError(
                f"amplitudes have shape {a.shape}, expected ({self.geometry.total_sites},)"
            )
        self.amplitudes = a

    @classmethod
    def delta(cls, geometry: BoxGeometry, site=None) -> "LatticeState":
        site = (0,) * geometry.d if site is None else tuple(site)
        idx = geometry.index_of(site)
        if idx is None:
            raise ValueError(f"site {site} is outside the box")
        a = np.zeros(geometry.total_sites, dtype=np.complex128)
        a[idx] = 1.0
        return cls(geometry, a)

    @classmethod
    def gaussian(cls, geometry, center=None, width=4.0, momentum=None) -> "LatticeState":
        """Normalized ``exp(-|n-c|^2 / (2 w^2)) exp(i k.n)``.

        ``momentum`` defaults to ``pi/2`` on every axis (band centre).
        """
        center = np.zeros(geometry.d) if center is None else np.asarray(center, float)
        k = np.full(geometry.d, np.pi / 2) if momentum is None else np.broadcast_to(
            np.asarray(momentum, float), (geometry.d,)
        )
        c = geometry.coords
        env = np.exp(-((c - center) ** 2).sum(axis=1) / (2.0 * width**2))
        a = env * np.exp(1j * (c @ k))
        return cls(geometry, a / np.linalg.norm(a))

    @classmethod
    def random(cls, geometry, rng=None, normalized=True) -> "LatticeState":
        rng = np.random.default_rng(rng)
        n = geometry.total_sites
        a = rng.normal(size=n) + 1j * rng.normal(size=n)
        if normalized:
            a /= np.linalg.norm(a)
        return cls(geometry, a)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def is_normalized(self, tol=1e-12) -> bool:
        return abs(self.norm() - 1.0) <= tol

    def copy(self) -> "LatticeState":
        return LatticeState(self.geometry, self.amplitudes.copy())


def weighted_norm(state: LatticeState, r: float) -> float:
    """``(sum_n (1+|n|^2)^r |psi_n|^2)^(1/2)``."""
    if r < 0:
        raise ValueError(f"moment order must be nonnegative, got {r}")
    p = np.abs(state.amplitudes) ** 2
    if not np.all(np.isfinite(p)):
        raise NonFiniteAmplitudeError("state has non-finite amplitudes")
    if r == 0:
        return float(math.sqrt(p.sum()))
    return float(math.sqrt(np.dot(state.geometry.weights(r), p)))


def weighted_norms(amplitudes, geometry: BoxGeometry, orders) -> np.ndarray:
    """Vectorized :func:`weighted_norm` for several orders on a raw array."""
    p = np.abs(amplitudes) ** 2
    if not np.all(np.isfinite(p)):
        raise NonFiniteAmplitudeError("state has non-finite amplitudes")
    return np.array(
        [math.sqrt(p.sum()) if r == 0 else math.sqrt(np.dot(geometry.weights(r), p)) for r in orders]
    )


def ball_probability(state: LatticeState, N: float) -> float:
    """Probability mass on sites with Euclidean ``|n| <= N``."""
    return float(ball_probabilities(state.amplitudes, state.geometry, [N])[0])


def ball_probabilities(amplitudes, geometry, radii) -> np.ndarray:
    p = np.abs(amplitudes) ** 2
    r2 = geometry.radius_sq
    # integer |n|^2 is exact in float64, compare squared radii
    return np.array([p[r2 <= float(N) ** 2].sum() for N in radii])


def dump_state_csv(state: LatticeState, path) -> None:
    d = state.geometry.d
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index"] + [f"n_{j + 1}" for j in range(d)] + ["re", "im"])
        for i, (site, a) in enumerate(zip(state.geometry.coords, state.amplitudes)):
            w.writerow([i, *map(int, site), repr(float(a.real)), repr(float(a.imag))])


def load_state_csv(path) -> LatticeState:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    d = len(header) - 3
    coords = np.array([[int(v) for v in row[1 : 1 + d]] for row in body])
    L = int(np.abs(coords).max()) if len(coords) else 0
    geometry = BoxGeometry(d, L)
    if len(body) != geometry.total_sites:
        raise ValueError(f"{path}: {len(body)} rows do not fill a box with L={L}, d={d}")
    amps = np.array([float(r[-2]) + 1j * float(r[-1]) for r in body])
    return LatticeState(geometry, amps)


def support_radius(state: LatticeState, rel_tol: float = 1e-16) -> int:
    """Sup-norm radius of the sites carrying ``|psi_n| > rel_tol * max |psi|``.

    This is the ``initial_support_radius`` used by the light-cone horizon; a
    Gaussian of width ``w`` gives roughly ``8.6 w``.
    """
    a = np.abs(state.amplitudes)
    peak = a.max()
    if peak == 0:
        return 0
    live = a > rel_tol * peak
    return int(np.abs(state.geometry.coords[live]).max())
