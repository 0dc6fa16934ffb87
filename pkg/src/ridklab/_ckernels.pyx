# cython: language_level=3
"""Compiled inner loops.

Mirrors :mod:`ridklab._pykernels` function for function; the two are
checked against each other in ``tests/test_backend.py``.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, cos, sin, fabs

cnp.import_array()

cdef double FLUSH = 1e-300


def bessel_ratio_table(Py_ssize_t jmax, double x):
    """I_j(x)/I_0(x) for j = 0..jmax (see the Python twin for the method)."""
    cdef Py_ssize_t top = jmax + 16
    cdef double tiny = 1e-300
    cdef double f, C, D, b, delta
    cdef Py_ssize_t n = 1, k
    cdef cnp.ndarray[cnp.float64_t, ndim=1] r = np.empty(top + 1)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.zeros(jmax + 1)

    # modified Lentz for I_{top+1}/I_top = 1/(b_1 + 1/(b_2 + ...)), b_n = 2(top+n)/x
    f = tiny
    C = f
    D = 0.0
    while True:
        b = 2.0 * (top + n) / x
        D = b + D
        if D == 0.0:
            D = tiny
        C = b + 1.0 / C
        if C == 0.0:
            C = tiny
        D = 1.0 / D
        delta = C * D
        f *= delta
        if fabs(delta - 1.0) < 1e-16:
            break
        n += 1
    r[top] = f
    for k in range(top, 0, -1):
        r[k - 1] = 1.0 / (2.0 * k / x + r[k])

    out[0] = 1.0
    for k in range(1, jmax + 1):
        out[k] = out[k - 1] * r[k - 1]
        if out[k] < FLUSH:
            out[k] = 0.0
            break
    return out


def char_sums_1d(double[::1] q, double[:, ::1] w, Py_ssize_t kmax):
    """S[a, k] = sum_i w[a, i] exp(-i k q_i), k = 0..kmax."""
    cdef Py_ssize_t n = q.shape[0], na = w.shape[0]
    cdef Py_ssize_t i0, i, k, a, b, nb
    cdef double tr, accr, acci
    # eight independent power recurrences at a time hide the multiply latency
    cdef double zr[8]
    cdef double zi[8]
    cdef double pr[8]
    cdef double pim[8]
    cdef double wv[8]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] sr = np.zeros((na, kmax + 1))
    cdef cnp.ndarray[cnp.float64_t, ndim=2] si = np.zeros((na, kmax + 1))
    cdef double[:, ::1] svr = sr
    cdef double[:, ::1] svi = si
    for a in range(na):
        for i0 in range(0, n, 8):
            nb = min(8, n - i0)
            for b in range(8):
                if b < nb:
                    i = i0 + b
                    zr[b] = cos(q[i])
                    zi[b] = -sin(q[i])
                    wv[b] = w[a, i]
                else:
                    zr[b] = 1.0
                    zi[b] = 0.0
                    wv[b] = 0.0
                pr[b] = 1.0
                pim[b] = 0.0
            for k in range(kmax + 1):
                accr = 0.0
                acci = 0.0
                for b in range(8):
                    accr += wv[b] * pr[b]
                    acci += wv[b] * pim[b]
                    tr = pr[b] * zr[b] - pim[b] * zi[b]
                    pim[b] = pr[b] * zi[b] + pim[b] * zr[b]
                    pr[b] = tr
                svr[a, k] += accr
                svi[a, k] += acci
    return sr + 1j * si


def char_sums_2d(double[:, ::1] q, double[:, ::1] w, Py_ssize_t m):
    """S[a, k1, k2] over FFT-ordered wavenumbers of an m x m grid."""
    cdef Py_ssize_t n = q.shape[0], na = w.shape[0]
    cdef Py_ssize_t i, a, k, l, half = m // 2
    cdef double zr, zi, pr, pi_, tr, wi, er, ei
    cdef cnp.ndarray[cnp.float64_t, ndim=3] sr = np.zeros((na, m, m))
    cdef cnp.ndarray[cnp.float64_t, ndim=3] si = np.zeros((na, m, m))
    cdef double[:, :, ::1] svr = sr
    cdef double[:, :, ::1] svi = si
    cdef double[:, ::1] e1r = np.empty((1, m))
    cdef double[:, ::1] e1i = np.empty((1, m))
    cdef double[:, ::1] e2r = np.empty((1, m))
    cdef double[:, ::1] e2i = np.empty((1, m))
    cdef Py_ssize_t ax
    for i in range(n):
        for ax in range(2):
            zr = cos(q[i, ax])
            zi = -sin(q[i, ax])
            pr = 1.0
            pi_ = 0.0
            for k in range(half + 1):
                # slot k holds +k; slot m-k holds -k (complex conjugate)
                if ax == 0:
                    e1r[0, k] = pr
                    e1i[0, k] = pi_
                    if 0 < k < half:
                        e1r[0, m - k] = pr
                        e1i[0, m - k] = -pi_
                else:
                    e2r[0, k] = pr
                    e2i[0, k] = pi_
                    if 0 < k < half:
                        e2r[0, m - k] = pr
                        e2i[0, m - k] = -pi_
                tr = pr * zr - pi_ * zi
                pi_ = pr * zi + pi_ * zr
                pr = tr
        # FFT ordering puts -m/2 in slot m/2
        e1i[0, half] = -e1i[0, half]
        e2i[0, half] = -e2i[0, half]
        for k in range(m):
            for l in range(m):
                er = e1r[0, k] * e2r[0, l] - e1i[0, k] * e2i[0, l]
                ei = e1r[0, k] * e2i[0, l] + e1i[0, k] * e2r[0, l]
                for a in range(na):
                    wi = w[a, i]
                    svr[a, k, l] += wi * er
                    svi[a, k, l] += wi * ei
    return sr + 1j * si
