"""Kernel backend selection.

The compiled extension is used when it imports; setting the environment
variable ``RIDKLAB_BACKEND=python`` forces the NumPy fallback.
"""
import os

import numpy as np

from . import _pykernels

BACKEND = "python"
_ck = None
if os.environ.get("RIDKLAB_BACKEND", "").lower() != "python":
    try:
        from . import _ckernels as _ck  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:  # extension not built
        _ck = None


def bessel_ratio_table(jmax, x):
    if _ck is not None:
        return _ck.bessel_ratio_table(int(jmax), float(x))
    return _pykernels.bessel_ratio_table(int(jmax), float(x))


def char_sums(q, w, m):
    """Characteristic sums over the FFT-ordered modes of an m^d grid.

    ``q`` has shape (N, d), ``w`` shape (A, N). Returns an array of shape
    (A, m, ..., m) with entries sum_i w[a, i] exp(-i k . q_i).
    """
    q = np.ascontiguousarray(q, dtype=float)
    w = np.ascontiguousarray(w, dtype=float)
    d = q.shape[1]
    if d == 1:
        half = m // 2
        if _ck is not None:
            pos = _ck.char_sums_1d(np.ascontiguousarray(q[:, 0]), w, half)
        else:
            pos = _pykernels.char_sums_1d(q[:, 0], w, half)
        out = np.empty((w.shape[0], m), dtype=complex)
        out[:, : half + 1] = pos
        out[:, half + 1:] = np.conj(pos[:, 1:half][:, ::-1])
        # slot m/2 is the wavenumber -m/2
        out[:, half] = np.conj(pos[:, half])
        return out
    if d == 2 and _ck is not None:
        return _ck.char_sums_2d(q, w, m)
    return _pykernels.char_sums_nd(q, w, m)
