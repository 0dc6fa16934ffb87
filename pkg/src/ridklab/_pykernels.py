"""Pure NumPy versions of the compiled kernels in ``_ckernels.pyx``."""
import numpy as np

FLUSH = 1e-300
_TINY = 1e-300


def _lentz_top_ratio(nu, x):
    """I_{nu+1}(x)/I_nu(x) from its continued fraction, modified Lentz."""
    f = _TINY
    C = f
    D = 0.0
    n = 1
    while True:
        b = 2.0 * (nu + n) / x
        D = b + D
        if D == 0.0:
            D = _TINY
        C = b + 1.0 / C
        if C == 0.0:
            C = _TINY
        D = 1.0 / D
        delta = C * D
        f *= delta
        if abs(delta - 1.0) < 1e-16:
            return f
        n += 1


def bessel_ratio_table(jmax, x):
    """I_j(x)/I_0(x) for j = 0..jmax.

    The top consecutive ratio comes from the continued fraction; the rest
    follow from the downward recurrence r_{k-1} = 1/(2k/x + r_k), which is
    stable for the minimal solution. Products below 1e-300 are flushed to 0.
    """
    top = jmax + 16
    r = np.empty(top + 1)
    r[top] = _lentz_top_ratio(top, x)
    for k in range(top, 0, -1):
        r[k - 1] = 1.0 / (2.0 * k / x + r[k])
    out = np.zeros(jmax + 1)
    out[0] = 1.0
    for k in range(1, jmax + 1):
        out[k] = out[k - 1] * r[k - 1]
        if out[k] < FLUSH:
            out[k] = 0.0
            break
    return out


def char_sums_1d(q, w, kmax, chunk=2048):
    """S[a, k] = sum_i w[a, i] exp(-i k q_i), k = 0..kmax."""
    k = np.arange(kmax + 1)
    out = np.zeros((w.shape[0], kmax + 1), dtype=complex)
    for start in range(0, q.shape[0], chunk):
        sl = slice(start, start + chunk)
        phase = np.exp(-1j * np.outer(q[sl], k))
        out += w[:, sl] @ phase
    return out


def char_sums_nd(q, w, m, chunk=512):
    """S[a, k_1, ..., k_d] over FFT-ordered wavenumbers of an m^d grid."""
    n, d = q.shape
    k = np.fft.fftfreq(m, 1.0 / m)
    out = np.zeros((w.shape[0],) + (m,) * d, dtype=complex)
    for start in range(0, n, chunk):
        sl = slice(start, start + chunk)
        # (chunk, m) per axis, combined by outer product along the particle axis
        tables = [np.exp(-1j * np.outer(q[sl, ax], k)) for ax in range(d)]
        prod = tables[0]
        for t in tables[1:]:
            prod = (prod[..., None] * t.reshape((t.shape[0],) + (1,) * (prod.ndim - 1) + (m,)))
        out += np.tensordot(w[:, sl], prod, axes=(1, 0))
    return out


def char_sums_2d(q, w, m):
    return char_sums_nd(q, w, m)
