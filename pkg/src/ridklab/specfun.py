"""Ratios of modified Bessel functions of the first kind.

Only ratios I_j(x)/I_0(x) are ever needed, so nothing here evaluates I_j on
its own: for x = 1/(2 eps^2) the absolute values overflow double precision
once eps drops below about 0.03.
"""
import math
from functools import lru_cache

import numpy as np
from scipy.special import ive

from . import _backend
from ._pykernels import _lentz_top_ratio


class DomainError(ValueError):
    """Argument outside the domain where a quantity is defined or validated."""


def _check_x(x):
    x = float(x)
    if not math.isfinite(x) or x <= 0.0:
        raise DomainError(f"Bessel argument must be finite and positive, got {x!r}")
    return x


def _check_order(j):
    if int(j) != j or j < 0:
        raise DomainError(f"order must be a non-negative integer, got {j!r}")
    return int(j)


@lru_cache(maxsize=256)
def _table_cached(jmax, x):
    t = _backend.bessel_ratio_table(jmax, x)
    t.setflags(write=False)
    return t


def bessel_ratio_table(jmax, x):
    """Return ``I_j(x)/I_0(x)`` for ``j = 0..jmax`` as a read-only array.

    Entries that would fall below 1e-300 are returned as exactly 0.
    """
    return _table_cached(_check_order(jmax), _check_x(x))


def bessel_ratio(j, x):
    """``I_j(x)/I_0(x)``; exactly 1 for ``j = 0``."""
    j = _check_order(j)
    x = _check_x(x)
    if j == 0:
        return 1.0
    return float(_table_cached(j, x)[j])


def consecutive_ratio(j, x):
    """``I_{j+1}(x)/I_j(x)`` for ``x >= 1``.

    Restricted to x >= 1, where the bound
    ``I_{j+1}(x)/I_j(x) < x / (j + 1/2 + x)`` is available.
    """
    j = _check_order(j)
    x = _check_x(x)
    if x < 1.0:
        raise DomainError(f"consecutive_ratio is validated for x >= 1 only, got {x!r}")
    top = j + 16
    r = _lentz_top_ratio(top, x)
    for k in range(top, j, -1):
        r = 1.0 / (2.0 * k / x + r)
    return r


def consecutive_ratio_bound(j, x):
    return x / (j + 0.5 + x)


@lru_cache(maxsize=256)
def _z_cached(eps):
    # Z = 2 pi exp(-1/eps^2) I_0(1/eps^2); ive carries the exp(-x) scaling
    return 2.0 * math.pi * float(ive(0, 1.0 / (eps * eps)))


def kernel_normalisation(eps):
    """Normalising constant ``Z_eps`` of the one-dimensional von Mises kernel."""
    eps = float(eps)
    if not math.isfinite(eps) or eps <= 0.0:
        raise DomainError(f"kernel width must be positive, got {eps!r}")
    return _z_cached(eps)


def gaussian_ratio_estimate(j, x):
    """Large-x approximation exp(-j^2/(2x)) of ``I_j(x)/I_0(x)``."""
    return np.exp(-np.asarray(j, dtype=float) ** 2 / (2.0 * x))
