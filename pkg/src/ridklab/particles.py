"""Underdamped Langevin particles on the torus and their kernel-smoothed fields."""
import math
from dataclasses import dataclass, field

import numpy as np

from . import _backend
from .fields import PairState, TorusGrid, inverse_transform, transform
from .kernel import KernelSpec, evaluate_kernel, fourier_ratios, kernel_fourier_grid
from .spectrum import theta_critical

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class ZeroPotential:
    def force(self, q):
        return np.zeros_like(q)

    def gradient_hat(self, grid):
        return np.zeros((grid.d,) + grid.shape, dtype=complex)


@dataclass(frozen=True)
class CosinePotential:
    """U(x) = u0 * sum_l cos(x_l)."""

    u0: float

    def __post_init__(self):
        if not math.isfinite(self.u0):
            raise ValueError("u0 must be finite")

    def force(self, q):
        """-N^-1 sum_j grad U(q_i - q_j), from the per-axis aggregates."""
        s, c = np.sin(q), np.cos(q)
        return self.u0 * (s * c.mean(axis=0) - c * s.mean(axis=0))

    def gradient_hat(self, grid):
        """Coefficients of d_l U for each axis l."""
        out = np.zeros((grid.d,) + grid.shape, dtype=complex)
        for ax in range(grid.d):
            idx = [0] * grid.d
            idx[ax] = 1
            out[(ax,) + tuple(idx)] = 1j * self.u0 / 2.0
            idx[ax] = -1
            out[(ax,) + tuple(idx)] = -1j * self.u0 / 2.0
        return out


def parse_potential(u0):
    return ZeroPotential() if not u0 else CosinePotential(float(u0))


@dataclass(frozen=True)
class LangevinParams:
    gamma: float
    sigma: float
    potential: object = field(default_factory=ZeroPotential)

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if not self.sigma >= 0:
            raise ValueError("sigma must be non-negative")

    @property
    def momentum_variance(self):
        return self.sigma**2 / (2.0 * self.gamma)


@dataclass
class ParticleEnsemble:
    q: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        self.q = np.mod(np.asarray(self.q, dtype=float), TWO_PI)
        self.p = np.asarray(self.p, dtype=float)
        if self.q.ndim != 2 or self.q.shape != self.p.shape:
            raise ValueError("positions and momenta must both have shape (N, d)")

    @property
    def n(self):
        return self.q.shape[0]

    @property
    def d(self):
        return self.q.shape[1]

    def copy(self):
        return ParticleEnsemble(self.q.copy(), self.p.copy())


def interaction_force(ensemble, potential):
    return potential.force(ensemble.q)


def step_langevin(ensemble, params, dt, rng):
    """One split step: kick/2, drift/2, exact OU, drift/2, kick/2."""
    if not dt > 0:
        raise ValueError("time step must be positive")
    q, p = ensemble.q.copy(), ensemble.p.copy()
    pot = params.potential
    p += 0.5 * dt * pot.force(q)
    q += 0.5 * dt * p
    decay = math.exp(-params.gamma * dt)
    spread = params.sigma * math.sqrt(-math.expm1(-2.0 * params.gamma * dt) / (2.0 * params.gamma))
    p = decay * p
    if spread > 0:
        p += spread * rng.standard_normal(p.shape)
    q += 0.5 * dt * p
    q = np.mod(q, TWO_PI)
    p += 0.5 * dt * pot.force(q)
    return ParticleEnsemble(q, p)


def sample_positions(n, d, rng, density=None, resolution=4096):
    """I.i.d. positions with a separable density, by per-axis inverse CDF.

    ``density`` is a function of one angle (unnormalised is fine) or None for
    the uniform law.
    """
    if density is None:
        return rng.uniform(0.0, TWO_PI, size=(n, d))
    x = np.linspace(0.0, TWO_PI, resolution + 1)
    f = np.asarray(density(x), dtype=float)
    if np.any(f < 0):
        raise ValueError("density must be non-negative")
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (f[1:] + f[:-1]) * np.diff(x))])
    cdf /= cdf[-1]
    return np.interp(rng.uniform(size=(n, d)), cdf, x) % TWO_PI


def sample_ensemble(n, d, params, rng, density=None):
    """Positions from ``density``; momenta from the stationary Gaussian."""
    q = sample_positions(n, d, rng, density)
    p = math.sqrt(params.momentum_variance) * rng.standard_normal((n, d))
    return ParticleEnsemble(q, p)


def empirical_fields(ensemble, spec, grid, time=0.0):
    """Kernel-smoothed density and momentum density of an ensemble."""
    if spec.d != ensemble.d or grid.d != ensemble.d:
        raise ValueError("dimension mismatch between ensemble, kernel and grid")
    weights = np.vstack([np.ones(ensemble.n), ensemble.p.T])
    sums = _backend.char_sums(ensemble.q, weights, grid.m) / ensemble.n
    coeffs = kernel_fourier_grid(grid.m, spec) * sums
    # project onto real band-limited fields (only the Nyquist entries change)
    coeffs = transform(inverse_transform(coeffs, grid), grid)
    return PairState(grid, coeffs[0], coeffs[1:], time)


def empirical_fields_direct(ensemble, spec, grid):
    """Grid values of (rho, j) by direct kernel sums; O(N M^d), for checks."""
    pts = grid.points()
    rho = np.zeros(grid.shape)
    j = np.zeros((grid.d,) + grid.shape)
    for i in range(ensemble.n):
        w = evaluate_kernel(np.mod(pts - ensemble.q[i], TWO_PI), spec)
        rho += w
        j += ensemble.p[i].reshape((grid.d,) + (1,) * grid.d) * w
    return rho / ensemble.n, j / ensemble.n


def micro_mode_cutoff(eps, s, tol=1e-12):
    """Per-axis mode count beyond which (1+k^2)^s |w_hat(k)|^2 is negligible."""
    guess = int(math.ceil(4.0 / eps)) + 8
    while True:
        r = fourier_ratios(guess, eps)
        k = np.arange(guess + 1)
        terms = (1.0 + k * k) ** s * r * r
        ok = np.nonzero(terms < tol * np.cumsum(terms))[0]
        ok = ok[ok > np.argmax(terms)]
        if ok.size:
            return int(ok[0])
        guess *= 2


def micro_grid(eps, s, d=1):
    kmax = micro_mode_cutoff(eps, s)
    m = 4
    while m // 2 <= kmax:
        m *= 2
    return TorusGrid(d, m)


def micro_scaling_exact(eps, s, d=1):
    """eps^(2s+d) sum_{k != 0} (1+|k|^2)^s |w_hat(k)|^2 for uniform i.i.d. positions."""
    grid = micro_grid(eps, s, d)
    w = kernel_fourier_grid(grid.m, KernelSpec(eps, d))
    total = float(np.sum(grid.sobolev_weight(s) * w * w)) - w[(0,) * d] ** 2
    return eps ** theta_critical(s, d) * total


@dataclass
class MicroStatistic:
    n: int
    eps: float
    s: float
    values: np.ndarray
    uncentred: np.ndarray

    @property
    def mean(self):
        return float(self.values.mean())

    @property
    def stderr(self):
        return float(self.values.std(ddof=1) / math.sqrt(self.values.size))

    @property
    def uncentred_mean(self):
        return float(self.uncentred.mean())


def micro_replica(n, eps, s, rng, d=1, grid=None):
    """One draw of (centred, uncentred) N eps^(2s+d) ||rho_eps||_{H^s}^2."""
    grid = grid or micro_grid(eps, s, d)
    q = rng.uniform(0.0, TWO_PI, size=(n, d))
    phi = _backend.char_sums(q, np.ones((1, n)), grid.m)[0] / n
    w = kernel_fourier_grid(grid.m, KernelSpec(eps, d))
    terms = grid.sobolev_weight(s) * (w * np.abs(phi)) ** 2
    zero = float(terms[(0,) * d])
    scale = n * eps ** theta_critical(s, d)
    total = float(terms.sum())
    return scale * (total - zero), scale * total


def micro_scaling_statistic(n, eps, s, replicas, rng, d=1):
    """Centred micro statistic over replicas; ``rng`` may be one Generator or one per replica."""
    if replicas < 2:
        raise ValueError("need at least two replicas")
    gens = rng if isinstance(rng, (list, tuple)) else [rng] * replicas
    if len(gens) != replicas:
        raise ValueError("one generator per replica expected")
    grid = micro_grid(eps, s, d)
    rows = np.array([micro_replica(n, eps, s, g, d, grid) for g in gens])
    return MicroStatistic(n, eps, s, rows[:, 0], rows[:, 1])
