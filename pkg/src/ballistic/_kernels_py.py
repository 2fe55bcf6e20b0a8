"""Pure numpy stencil kernels (fallback when the compiled core is unavailable).

All kernels act on flattened lexicographic vectors of ``m**d`` sites, where
``m = 2L + 1``.  A trailing batch axis is allowed: ``x`` may have shape
``(N,)`` or ``(N, k)``.
"""

import numpy as np

NAME = "python"


def _grid(x, d, m):
    return x.reshape((m,) * d + x.shape[1:])


def _axis_slices(d, axis):
    lo = [slice(None)] * d
    hi = [slice(None)] * d
    lo[axis] = slice(0, -1)
    hi[axis] = slice(1, None)
    return tuple(lo), tuple(hi)


def laplacian(x, d, m):
    """Dirichlet nearest-neighbour sum, ``(Lap x)_n = sum_j x_{n+e_j} + x_{n-e_j}``."""
    g = _grid(x, d, m)
    out = np.zeros_like(g)
    for axis in range(d):
        lo, hi = _axis_slices(d, axis)
        out[lo] += g[hi]
        out[hi] += g[lo]
    return out.reshape(x.shape)


def laplacian_axis(x, d, m, axis):
    g = _grid(x, d, m)
    out = np.zeros_like(g)
    lo, hi = _axis_slices(d, axis)
    out[lo] += g[hi]
    out[hi] += g[lo]
    return out.reshape(x.shape)


def hamiltonian(x, v, d, m):
    vv = v if x.ndim == 1 else v[:, None]
    return vv * x - laplacian(x, d, m)


def chebyshev_series(x, v, center, half_width, coeffs, d, m):
    """Return ``sum_k coeffs[k] T_k(Hs) x`` with ``Hs = (H - center) / half_width``."""
    x = np.asarray(x, dtype=np.complex128)
    vs = (np.asarray(v, dtype=np.float64) - center) / half_width
    inv_a = 1.0 / half_width

    def hs(y):
        return vs * y - inv_a * laplacian(y, d, m)

    out = coeffs[0] * x
    if len(coeffs) == 1:
        return out
    w0 = x
    w1 = hs(x)
    out = out + coeffs[1] * w1
    for c in coeffs[2:]:
        w0, w1 = w1, 2.0 * hs(w1) - w0
        out += c * w1
    return out
