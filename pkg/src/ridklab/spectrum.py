"""Eigenstructure of the convolution operator P_{sqrt2 eps} on the torus.

The eigenvalue of P_{sqrt2 eps} on the mode j is
``prod_l I_|j_l|(x)/I_0(x)`` with ``x = 1/(2 eps^2)``.
"""
import math
from dataclasses import dataclass, field

import numpy as np

from .specfun import DomainError, bessel_ratio_table

TWO_PI = 2.0 * math.pi
TAIL_TOL = 1e-12


class TruncationError(ValueError):
    """Raised when a lattice truncation leaves a non-negligible tail."""

    def __init__(self, message, suggested_jmax=None):
        super().__init__(message)
        self.suggested_jmax = suggested_jmax


@dataclass(frozen=True)
class SobolevIndex:
    s: float
    eta: float | None = None

    def __post_init__(self):
        if self.s < 0:
            raise DomainError(f"s must be non-negative, got {self.s}")

    @classmethod
    def from_eta(cls, d, eta):
        return cls(d / 2.0 + eta, eta)


def bessel_argument(eps):
    return 1.0 / (2.0 * eps * eps)


def eigenvalues_1d(jmax, eps):
    """lambda_{j,eps} for j = 0..jmax."""
    return bessel_ratio_table(int(jmax), bessel_argument(eps))


def eigenvalue(j, eps):
    j = np.abs(np.atleast_1d(np.asarray(j, dtype=int)))
    table = eigenvalues_1d(int(j.max()), eps)
    return float(np.prod(table[j]))


@dataclass(frozen=True)
class EigenSpectrum:
    """Tabulated per-axis eigenvalues of P_{sqrt2 eps}, ``table[j] = lambda_j``."""

    eps: float
    d: int
    jmax: int
    table: np.ndarray = field(repr=False, compare=False)

    @classmethod
    def build(cls, eps, d, jmax=None, s=0.0):
        if jmax is None:
            jmax = choose_jmax(s, eps)
        return cls(eps, d, int(jmax), eigenvalues_1d(jmax, eps))

    def eigenvalue(self, j):
        j = np.abs(np.asarray(j, dtype=int))
        return np.prod(self.table[j], axis=-1)

    def weights(self, s):
        """Sobolev weights alpha_j = (1+j^2)^s lambda_j along one axis."""
        j = np.arange(self.jmax + 1)
        return (1.0 + j * j) ** s * self.table

    def rows(self, s):
        """(j, lambda_j, alpha_j) rows for j = 0..jmax."""
        return list(zip(range(self.jmax + 1), self.table.tolist(), self.weights(s).tolist()))


def choose_jmax(s, eps, tol=TAIL_TOL):
    """Smallest per-axis order whose weighted tail term is below tol x running sum."""
    guess = int(math.ceil(8.0 / eps)) + 8
    while True:
        lam = eigenvalues_1d(guess, eps)
        j = np.arange(guess + 1)
        terms = lam * (1.0 + j * j) ** s
        running = np.cumsum(terms)
        ok = np.nonzero(terms < tol * running)[0]
        # the weighted terms rise before they decay; only accept past the peak
        ok = ok[ok > np.argmax(terms)]
        if ok.size:
            return int(ok[0])
        guess *= 2


def _check_tail(s, eps, jmax):
    lam = eigenvalues_1d(jmax, eps)
    j = np.arange(jmax + 1)
    terms = lam * (1.0 + j * j) ** s
    if terms[-1] >= TAIL_TOL * terms.sum():
        raise TruncationError(
            f"J_max={jmax} leaves a tail term {terms[-1]:.3e} for eps={eps}, s={s}",
            suggested_jmax=choose_jmax(s, eps),
        )
    return lam


def radial_histogram(lam, d):
    """Mass of prod_l lambda_{j_l} collected by |j|^2 over the box |j|_inf <= J.

    Returns an array h with h[r] = sum over lattice points with |j|^2 = r.
    This is the per-axis factorisation: each axis contributes a sparse
    vector indexed by j^2, and d of them are convolved.
    """
    jmax = lam.shape[0] - 1
    j = np.arange(jmax + 1)
    axis = np.where(j == 0, 1.0, 2.0) * lam
    hist = np.zeros(jmax * jmax + 1)
    hist[j * j] = axis
    for _ in range(d - 1):
        nxt = np.zeros(hist.shape[0] + jmax * jmax)
        n = hist.shape[0]
        for jj in range(jmax + 1):
            if axis[jj] == 0.0:
                break
            nxt[jj * jj: jj * jj + n] += axis[jj] * hist
        hist = nxt
    return hist


def sobolev_trace(s, eps, d, jmax=None):
    """sum_{|j|_inf <= J} lambda_{j,eps} (1+|j|^2)^s."""
    s = s.s if isinstance(s, SobolevIndex) else float(s)
    if jmax is None:
        jmax = choose_jmax(s, eps)
    lam = _check_tail(s, eps, int(jmax))
    hist = radial_histogram(lam, d)
    r = np.arange(hist.shape[0])
    return float(np.sum(hist * (1.0 + r) ** s))


def factorised_trace_bound(s, eps, d, jmax=None):
    """C(s,d) [1-d weighted trace] [1-d trace]^(d-1) with C = d max(1, d^(s-1))."""
    if jmax is None:
        jmax = choose_jmax(s, eps)
    lam = eigenvalues_1d(jmax, eps)
    j = np.arange(jmax + 1)
    mult = np.where(j == 0, 1.0, 2.0)
    weighted = np.sum(mult * lam * (1.0 + j * j) ** s)
    plain = np.sum(mult * lam)
    return d * max(1.0, d ** (s - 1.0)) * weighted * plain ** (d - 1)


def basis_norm_constant(d):
    # makes the product basis orthonormal for the (2 pi)^-d coefficient convention
    return TWO_PI ** (d / 2.0)


def trig_1d(j, x):
    """The real L^2-orthonormal trigonometric system e_j on [0, 2 pi)."""
    x = np.asarray(x, dtype=float)
    if j > 0:
        return np.cos(j * x) / math.sqrt(math.pi)
    if j < 0:
        return np.sin(j * x) / math.sqrt(math.pi)
    return np.full_like(x, 1.0 / math.sqrt(TWO_PI))


def basis_function(j, s, x):
    """H^s-orthonormal eigenfunction f_{j,s} of P_{sqrt2 eps} at points ``x``.

    ``x`` is an array whose last axis holds the d coordinates.
    """
    s = s.s if isinstance(s, SobolevIndex) else float(s)
    j = np.atleast_1d(np.asarray(j, dtype=int))
    x = np.asarray(x, dtype=float)
    d = j.shape[0]
    if x.shape[-1] != d:
        raise ValueError(f"points need {d} coordinates")
    val = basis_norm_constant(d) * (1.0 + float(np.sum(j * j))) ** (-s / 2.0)
    out = np.full(x.shape[:-1], val)
    for ax in range(d):
        out = out * trig_1d(int(j[ax]), x[..., ax])
    return out


def bound_exponent(alpha, beta, s, d):
    """Exponent of 1/eps in the trace bound for an admissible (alpha, beta)."""
    if not (0.0 < alpha < 1.0 and 0.0 < beta < 1.0) or alpha + beta < 1.0 - 1e-12:
        raise DomainError(f"(alpha, beta)=({alpha}, {beta}) is not admissible")
    return max(2 * beta * (2 * s + 1), 2 * alpha * (2 * s + 1), 2 * alpha + 4 * beta * s) + (d - 1)


def admissible_grid(step=0.01):
    n = int(round(1.0 / step))
    pairs = []
    for a in range(1, n):
        for b in range(1, n):
            if a + b >= n:
                pairs.append((a / n, b / n))
    return pairs


def minimise_bound_exponent(s, d, step=0.01):
    """Exhaustive search of bound_exponent over the admissible grid."""
    best = min(admissible_grid(step), key=lambda ab: (bound_exponent(ab[0], ab[1], s, d), ab))
    return best, bound_exponent(best[0], best[1], s, d)


def theta_critical(s, d):
    """Critical scaling exponent 2s + d."""
    if s < 0:
        raise DomainError("s must be non-negative")
    return 2.0 * s + d


def loglog_slope(x, y):
    """Least-squares slope of log y against log x."""
    return float(np.polyfit(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)), 1)[0])
