"""Separable von Mises kernel on the torus [0, 2 pi)^d."""
import math
from dataclasses import dataclass

import numpy as np

from .specfun import DomainError, bessel_ratio_table, kernel_normalisation

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class KernelSpec:
    """Width ``eps`` and spatial dimension ``d`` of a von Mises kernel."""

    eps: float
    d: int = 1

    def __post_init__(self):
        if not (math.isfinite(self.eps) and self.eps > 0):
            raise DomainError(f"eps must be positive, got {self.eps!r}")
        if int(self.d) != self.d or self.d < 1:
            raise DomainError(f"d must be a positive integer, got {self.d!r}")

    @property
    def z(self):
        return kernel_normalisation(self.eps)

    def scaled(self, factor):
        return KernelSpec(self.eps * factor, self.d)


def evaluate_kernel_1d(x, eps):
    x = np.asarray(x, dtype=float)
    return np.exp(-np.sin(x / 2.0) ** 2 / (eps * eps / 2.0)) / kernel_normalisation(eps)


def evaluate_kernel(x, spec):
    """w_eps at points ``x``; the last axis of ``x`` holds the d coordinates.

    For ``d = 1`` a plain array of points is also accepted.
    """
    x = np.asarray(x, dtype=float)
    if spec.d == 1 and (x.ndim == 0 or x.shape[-1] != 1):
        return evaluate_kernel_1d(x, spec.eps)
    if x.shape[-1] != spec.d:
        raise ValueError(f"points have {x.shape[-1]} coordinates, kernel has d={spec.d}")
    s2 = np.sum(np.sin(x / 2.0) ** 2, axis=-1)
    return np.exp(-s2 / (spec.eps**2 / 2.0)) / spec.z**spec.d


def fourier_ratios(kmax, eps):
    """Per-axis factors I_|k|(1/eps^2)/I_0(1/eps^2) for k = 0..kmax."""
    return bessel_ratio_table(int(kmax), 1.0 / (eps * eps))


def kernel_fourier_coefficient(j, spec):
    """Fourier coefficient (2 pi)^-d int w_eps(x) exp(-i j.x) dx."""
    j = np.atleast_1d(np.abs(np.asarray(j, dtype=int)))
    if j.shape[-1] != spec.d:
        raise ValueError(f"lattice vector needs {spec.d} components")
    table = fourier_ratios(int(j.max()), spec.eps)
    return float(np.prod(table[j])) / TWO_PI**spec.d


def kernel_fourier_grid(m, spec):
    """Coefficients of w_eps on the FFT-ordered modes of an m^d grid."""
    k = np.abs(np.fft.fftfreq(m, 1.0 / m)).astype(int)
    per_axis = fourier_ratios(m // 2, spec.eps)[k]
    out = np.ones((m,) * spec.d)
    for ax in range(spec.d):
        shape = [1] * spec.d
        shape[ax] = m
        out = out * per_axis.reshape(shape)
    return out / TWO_PI**spec.d


def multiplication_rule_residual(x1, x2, q, spec):
    """|w(x1-q) w(x2-q) - w_{sqrt2 eps}(x1-x2) w_{eps/sqrt2}((x1+x2)/2 - q)|."""
    x1, x2, q = (np.asarray(a, dtype=float) for a in (x1, x2, q))
    lhs = evaluate_kernel(x1 - q, spec) * evaluate_kernel(x2 - q, spec)
    rhs = evaluate_kernel(x1 - x2, spec.scaled(math.sqrt(2.0))) * evaluate_kernel(
        (x1 + x2) / 2.0 - q, spec.scaled(1.0 / math.sqrt(2.0))
    )
    return np.abs(lhs - rhs)
