# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled stencil kernels for 1-D complex128 lattice vectors.

Sites are stored lexicographically; axis ``j`` has stride ``m**(d-1-j)``.
Complex vectors are handled as interleaved (re, im) doubles so the inner
loops stay plain real arithmetic.
"""

import numpy as np

NAME = "compiled"


cdef inline Py_ssize_t _ipow(Py_ssize_t base, int e) noexcept nogil:
    cdef Py_ssize_t r = 1
    cdef int i
    for i in range(e):
        r *= base
    return r


cdef void _sub_hop(const double* x, double* out, double scale, int d,
                   Py_ssize_t m, Py_ssize_t n) noexcept nogil:
    # out -= scale * (sum over Dirichlet neighbours of x), n complex sites
    cdef Py_ssize_t inner, outer, o, c, t, row, s, blk
    cdef int axis
    for axis in range(d):
        inner = _ipow(m, d - 1 - axis)
        outer = n // (m * inner)
        s = 2 * inner
        blk = 2 * m * inner
        for o in range(outer):
            row = o * blk
            # neighbour at +e_axis exists for c < m-1, at -e_axis for c > 0
            for t in range(row, row + blk - s):
                out[t] -= scale * x[t + s]
            for t in range(row + s, row + blk):
                out[t] -= scale * x[t - s]


def _as_real(a):
    return a.view(np.float64)


def laplacian(x, int d, Py_ssize_t m):
    cdef Py_ssize_t n = x.shape[0]
    out_arr = np.zeros(n, dtype=np.complex128)
    cdef const double[::1] xv = _as_real(x)
    cdef double[::1] ov = _as_real(out_arr)
    with nogil:
        _sub_hop(&xv[0], &ov[0], -1.0, d, m, n)
    return out_arr


def hamiltonian(x, const double[::1] v, int d, Py_ssize_t m):
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t i
    out_arr = np.empty(n, dtype=np.complex128)
    cdef const double[::1] xv = _as_real(x)
    cdef double[::1] ov = _as_real(out_arr)
    with nogil:
        for i in range(n):
            ov[2 * i] = v[i] * xv[2 * i]
            ov[2 * i + 1] = v[i] * xv[2 * i + 1]
        _sub_hop(&xv[0], &ov[0], 1.0, d, m, n)
    return out_arr


def chebyshev_series(x, const double[::1] v, double center, double half_width,
                     coeffs, int d, Py_ssize_t m):
    """``sum_k coeffs[k] T_k(Hs) x`` with ``Hs = (H - center) / half_width``."""
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t nk = coeffs.shape[0]
    cdef Py_ssize_t i, k
    cdef double inv_a = 1.0 / half_width
    cdef double cr, ci, ar, ai

    out_arr = np.empty(n, dtype=np.complex128)
    vs_arr = (np.asarray(v) - center) * inv_a
    w0_arr = np.array(x, dtype=np.complex128, copy=True)
    w1_arr = np.empty(n, dtype=np.complex128)
    cdef const double[::1] xv = _as_real(x)
    cdef const double[::1] cv = _as_real(np.ascontiguousarray(coeffs))
    cdef double[::1] ov = _as_real(out_arr)
    cdef double[::1] vs = vs_arr
    cdef double[::1] w0v = _as_real(w0_arr)
    cdef double[::1] w1v = _as_real(w1_arr)
    cdef double* out = &ov[0]
    cdef double* w0 = &w0v[0]
    cdef double* w1 = &w1v[0]
    cdef double* tmp

    with nogil:
        cr = cv[0]
        ci = cv[1]
        for i in range(n):
            ar = xv[2 * i]
            ai = xv[2 * i + 1]
            out[2 * i] = cr * ar - ci * ai
            out[2 * i + 1] = cr * ai + ci * ar
        if nk > 1:
            for i in range(n):
                w1[2 * i] = vs[i] * xv[2 * i]
                w1[2 * i + 1] = vs[i] * xv[2 * i + 1]
            _sub_hop(&xv[0], w1, inv_a, d, m, n)
            cr = cv[2]
            ci = cv[3]
            for i in range(n):
                ar = w1[2 * i]
                ai = w1[2 * i + 1]
                out[2 * i] += cr * ar - ci * ai
                out[2 * i + 1] += cr * ai + ci * ar
        for k in range(2, nk):
            # w0 <- 2 Hs w1 - w0 in place; the hop reads only w1
            for i in range(n):
                w0[2 * i] = 2.0 * vs[i] * w1[2 * i] - w0[2 * i]
                w0[2 * i + 1] = 2.0 * vs[i] * w1[2 * i + 1] - w0[2 * i + 1]
            _sub_hop(w1, w0, 2.0 * inv_a, d, m, n)
            cr = cv[2 * k]
            ci = cv[2 * k + 1]
            for i in range(n):
                ar = w0[2 * i]
                ai = w0[2 * i + 1]
                out[2 * i] += cr * ar - ci * ai
                out[2 * i + 1] += cr * ai + ci * ar
            tmp = w0
            w0 = w1
            w1 = tmp
    return out_arr
