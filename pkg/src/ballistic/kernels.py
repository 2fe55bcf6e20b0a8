"""Backend selection for the stencil hot loops.

The compiled Cython core is used when it imports and the environment variable
``BALLISTIC_KERNELS`` is not set to ``python``.  Only 1-D complex128 vectors go
through the compiled path; batched or real inputs always use numpy.
"""

import os

import numpy as np

from . import _kernels_py as python

try:
    from . import _ckernels as compiled
except ImportError:  # pragma: no cover - depends on build
    compiled = None

_active = None


def available():
    return ["python"] + (["compiled"] if compiled is not None else [])


def set_backend(name):
    """Select ``"compiled"`` or ``"python"``; returns the previous name."""
    global _active
    if name == "compiled" and compiled is None:
        raise RuntimeError("compiled kernels are not built")
    if name not in ("compiled", "python"):
        raise ValueError(f"unknown backend {name!r}")
    prev = backend()
    _active = compiled if name == "compiled" else python
    return prev


def backend():
    return _active.NAME


def _fast(x):
    return (
        _active is compiled
        and x.ndim == 1
        and x.dtype == np.complex128
        and x.flags.c_contiguous
    )


def laplacian(x, d, m):
    if _fast(x):
        return compiled.laplacian(x, d, m)
    return python.laplacian(x, d, m)


def laplacian_axis(x, d, m, axis):
    return python.laplacian_axis(x, d, m, axis)


def hamiltonian(x, v, d, m):
    if _fast(x):
        return compiled.hamiltonian(x, v, d, m)
    return python.hamiltonian(x, v, d, m)


def chebyshev_series(x, v, center, half_width, coeffs, d, m):
    x = np.ascontiguousarray(x, dtype=np.complex128)
    if _fast(x):
        return compiled.chebyshev_series(
            x,
            np.ascontiguousarray(v, dtype=np.float64),
            float(center),
            float(half_width),
            np.ascontiguousarray(coeffs, dtype=np.complex128),
            d,
            m,
        )
    return python.chebyshev_series(x, v, center, half_width, coeffs, d, m)


_want = os.environ.get("BALLISTIC_KERNELS", "").lower()
if _want == "python" or compiled is None:
    _active = python
else:
    _active = compiled
