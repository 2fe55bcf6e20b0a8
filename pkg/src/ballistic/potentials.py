"""Potential families and decay diagnostics.

Families:

``zero``
    V = 0.
``power_law``
    ``V_n = c (1 + |n|)^(-alpha)``; in the o(1/|n|) class iff alpha > 1.
``wigner_von_neumann``
    ``V_n = c sin(2 k n) / max(1, |n|)``, d = 1 only; O(1/|n|) but not o(1/|n|).
``anderson``
    i.i.d. uniform on ``[-lam/2, lam/2]`` from a Philox counter-based stream
    keyed by ``seed``; a localization control outside the decaying class.
``periodic``
    ``V_n = sum_j pattern[n_j mod p]``; a ballistic control.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Tuple

import numpy as np

from .lattice import BoxGeometry
from .operators import PotentialField

FAMILIES = ("zero", "power_law", "wigner_von_neumann", "anderson", "periodic")


@dataclass(frozen=True)
class PotentialSpec:
    family: str = "zero"
    c: float = 1.0
    alpha: float = 2.0
    k: float = 1.0
    lam: float = 0.0
    seed: int = 0
    pattern: Tuple[float, ...] = ()

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown potential family {self.family!r}; expected one of {FAMILIES}")
        for name in ("c", "alpha", "k", "lam"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"potential parameter {name} must be finite")
        if self.family == "power_law" and self.alpha <= 0:
            raise ValueError("power_law needs alpha > 0")
        if self.family == "periodic":
            p = tuple(float(x) for x in self.pattern)
            if not p:
                raise ValueError("periodic potential needs a non-empty pattern")
            if not all(math.isfinite(x) for x in p):
                raise ValueError("periodic pattern must be finite")
            n = len(p)
            if any(p[i] != p[(-i) % n] for i in range(n)):
                raise ValueError("periodic pattern must satisfy pattern[k] == pattern[-k mod p]")
            object.__setattr__(self, "pattern", p)

    def params(self) -> dict:
        """Only the parameters the family actually uses."""
        keys = {
            "zero": (),
            "power_law": ("c", "alpha"),
            "wigner_von_neumann": ("c", "k"),
            "anderson": ("lam", "seed"),
            "periodic": ("pattern",),
        }[self.family]
        full = asdict(self)
        return {k: full[k] for k in keys}

    def label(self) -> str:
        inner = ",".join(f"{k}={v}" for k, v in self.params().items())
        return f"{self.family}({inner})"


def realize(spec: PotentialSpec, geometry: BoxGeometry) -> PotentialField:
    n = geometry.total_sites
    radius = np.sqrt(geometry.radius_sq)
    if spec.family == "zero":
        v = np.zeros(n)
    elif spec.family == "power_law":
        v = spec.c * (1.0 + radius) ** (-spec.alpha)
    elif spec.family == "wigner_von_neumann":
        if geometry.d != 1:
            raise ValueError("wigner_von_neumann potential is defined for d = 1 only")
        site = geometry.coords[:, 0].astype(np.float64)
        v = spec.c * np.sin(2.0 * spec.k * site) / np.maximum(1.0, np.abs(site))
    elif spec.family == "anderson":
        gen = np.random.Generator(np.random.Philox(key=int(spec.seed)))
        v = spec.lam * (gen.random(n) - 0.5)
    else:
        p = np.asarray(spec.pattern)
        v = p[np.mod(geometry.coords, len(p))].sum(axis=1)
    return PotentialField(geometry, v, label=spec.label())


def decay_profile(field: PotentialField):
    """``[(R, sup_{|n| >= R} |n| |V_n|)]`` for ``R = 1, 2, 4, ...`` up to ``L``."""
    g = field.geometry
    radius = np.sqrt(g.radius_sq)
    scaled = radius * np.abs(field.values)
    order = np.argsort(radius)
    # running sup from the outside in
    tail_sup = np.maximum.accumulate(scaled[order][::-1])[::-1]
    sorted_r = radius[order]
    out = []
    R = 1
    radii = []
    while R < g.L:
        radii.append(R)
        R *= 2
    radii.append(g.L)
    for R in radii:
        i = int(np.searchsorted(sorted_r, R - 1e-9))
        out.append((R, float(tail_sup[i]) if i < len(tail_sup) else 0.0))
    return out


def satisfies_decay_hypothesis(field: PotentialField, ratio: float = 0.25) -> bool:
    """Box-scale label for ``|n| V_n -> 0``.

    True when the profile is nonincreasing over its outer half and its last
    value is at most ``ratio`` times its largest value (or identically 0).
    """
    vals = np.array([v for _, v in decay_profile(field)])
    peak = vals.max()
    if peak == 0.0:
        return True
    tail = vals[len(vals) // 2 :]
    return bool(np.all(np.diff(tail) <= 1e-15 * peak) and vals[-1] <= ratio * peak)


def dump_potential_csv(field: PotentialField, path) -> None:
    import csv

    g = field.geometry
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index"] + [f"n_{j + 1}" for j in range(g.d)] + ["value"])
        for i, (site, v) in enumerate(zip(g.coords, field.values)):
            w.writerow([i, *map(int, site), repr(float(v))])
