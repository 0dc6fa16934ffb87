"""Regularised inertial density/momentum SPDE on the torus.

State ``X = (rho, j)`` evolves by ``dX = [A X + alpha_U(X)] dt + B(X) dW`` with
the damped-wave operator ``A(rho, j) = (-div j, -c grad rho - gamma j)``,
``c = sigma^2 / (2 gamma)``, and multiplicative noise
``B(X) dW = (0, sigma N^-1/2 h_delta(rho) dW)``.
"""
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
from scipy.signal import fftconvolve

from .fields import (
    TWO_PI,
    PairState,
    TorusGrid,
    energy_norm,
    hs_norm,
    inverse_transform,
    pair_norm,
    transform,
)
from .kernel import fourier_ratios
from .particles import ZeroPotential
from .spectrum import _check_tail, choose_jmax, eigenvalues_1d, loglog_slope, theta_critical

RESOLUTION_TOL = 1e-8


class BlowUpError(RuntimeError):
    def __init__(self, step):
        super().__init__(f"non-finite state after step {step}")
        self.step = step


class ResolutionError(ValueError):
    def __init__(self, message, suggested_m):
        super().__init__(message)
        self.suggested_m = suggested_m


# --- regularised square root ----------------------------------------------


def _sqrt_derivative_factors(order):
    """c_k with d^k/dy^k y^(1/2) = c_k y^(1/2 - k)."""
    out = [1.0]
    for k in range(order):
        out.append(out[-1] * (0.5 - k))
    return np.array(out)


@lru_cache(maxsize=None)
def _blend_coefficients(m):
    """Monomial coefficients of Q on [0, 1] with Q(0) = 1/2 and Q^(k)(1) = (t^1/2)^(k)(1), k <= m."""
    deg = m + 1
    rows, rhs = [], []
    row = np.zeros(deg + 1)
    row[0] = 1.0
    rows.append(row)
    rhs.append(0.5)
    target = _sqrt_derivative_factors(m)
    for k in range(m + 1):
        row = np.zeros(deg + 1)
        for n in range(k, deg + 1):
            row[n] = math.perm(n, k)
        rows.append(row)
        rhs.append(target[k])
    coef = np.linalg.solve(np.array(rows), np.array(rhs))
    coef.setflags(write=False)
    return coef


@dataclass(frozen=True)
class RegularisationSpec:
    """Threshold ``delta`` and dimension ``d``; smoothness order m = ceil(d/2) + 2."""

    delta: float
    d: int = 1

    def __post_init__(self):
        if not (math.isfinite(self.delta) and self.delta > 0):
            raise ValueError("delta must be positive")

    @property
    def m(self):
        return math.ceil(self.d / 2) + 2

    @property
    def threshold(self):
        return self.delta / 2.0


def h_delta(z, spec):
    """sqrt|z| for |z| >= delta/2; inside, sqrt(P(z^2)) with a Hermite blend P > 0."""
    z = np.asarray(z, dtype=float)
    a = spec.threshold**2
    y = np.minimum(z * z / a, 1.0)
    q = np.polynomial.polynomial.polyval(y, _blend_coefficients(spec.m))
    inner = math.sqrt(spec.threshold) * np.sqrt(q)
    out = np.where(np.abs(z) >= spec.threshold, np.sqrt(np.abs(z)), inner)
    return out if out.ndim else float(out)


def _series_sqrt(a):
    """Taylor coefficients of sqrt of a series with a[0] > 0 (leading axis = order)."""
    b = np.zeros_like(a)
    b[0] = np.sqrt(a[0])
    for k in range(1, a.shape[0]):
        acc = a[k].copy()
        for i in range(1, k):
            acc -= b[i] * b[k - i]
        b[k] = acc / (2.0 * b[0])
    return b


def h_delta_derivatives(z, spec, order):
    """Array of shape (order+1,) + z.shape with d^k h_delta / dz^k, analytic on each piece."""
    z = np.asarray(z, dtype=float)
    out = np.empty((order + 1,) + z.shape)
    inside = np.abs(z) < spec.threshold
    zo = np.where(inside, spec.threshold, np.abs(z))
    fac = _sqrt_derivative_factors(order)
    sign = np.where(z < 0, -1.0, 1.0)
    for k in range(order + 1):
        out[k] = fac[k] * zo ** (0.5 - k) * sign**k
    if np.any(inside):
        zi = z[inside]
        a = spec.threshold**2
        # jet of y = (z + t)^2 / a, truncated to the requested order
        y = np.zeros((order + 1, zi.size))
        y[0] = zi * zi / a
        if order >= 1:
            y[1] = 2.0 * zi / a
        if order >= 2:
            y[2] = 1.0 / a
        coef = _blend_coefficients(spec.m)
        q = np.zeros_like(y)
        for c in coef[::-1]:
            q = _series_mul(q, y)
            q[0] += c
        b = _series_sqrt(q) * math.sqrt(spec.threshold)
        for k in range(order + 1):
            out[k][inside] = b[k] * math.factorial(k)
    return out


def _series_mul(u, v):
    n = u.shape[0]
    w = np.zeros_like(u)
    for k in range(n):
        for i in range(k + 1):
            w[k] += u[i] * v[k - i]
    return w


# --- linear propagator ----------------------------------------------------


def _mode_factors(omega2, gamma, t):
    """(e^{-gamma t/2} C, e^{-gamma t/2} S) with C = cosh(w t), S = sinh(w t)/w, w^2 = omega2."""
    omega2 = np.asarray(omega2, dtype=float)
    half = math.exp(-0.5 * gamma * t)
    x = omega2 * t * t
    small = np.abs(x) < 1e-2
    ec = np.empty_like(omega2)
    es = np.empty_like(omega2)
    # series near the double root: C = sum x^n/(2n)!, S = t sum x^n/(2n+1)!
    if np.any(small):
        xs = x[small]
        c_sum = np.zeros_like(xs)
        s_sum = np.zeros_like(xs)
        term_c = np.ones_like(xs)
        term_s = np.ones_like(xs)
        for n in range(12):
            c_sum += term_c
            s_sum += term_s
            term_c = term_c * xs / ((2 * n + 1) * (2 * n + 2))
            term_s = term_s * xs / ((2 * n + 2) * (2 * n + 3))
        ec[small] = half * c_sum
        es[small] = half * t * s_sum
    osc = (~small) & (omega2 < 0)
    if np.any(osc):
        nu = np.sqrt(-omega2[osc])
        ec[osc] = half * np.cos(nu * t)
        es[osc] = half * np.sin(nu * t) / nu
    grow = (~small) & (omega2 > 0)
    if np.any(grow):
        w = np.sqrt(omega2[grow])
        lead = np.exp((w - 0.5 * gamma) * t)
        ec[grow] = 0.5 * lead * (1.0 + np.exp(-2.0 * w * t))
        es[grow] = -0.5 * lead * np.expm1(-2.0 * w * t) / w
    return ec, es


class Propagator:
    """Exact e^{tA} on the Fourier modes of a grid."""

    def __init__(self, grid, t, gamma, c):
        if t < 0:
            raise ValueError("propagation time must be non-negative")
        self.grid, self.t, self.gamma, self.c = grid, float(t), float(gamma), float(c)
        kd = grid.derivative_wavenumbers()
        kappa2 = sum(k * k for k in kd) * np.ones(grid.shape)
        kappa = np.sqrt(kappa2)
        ec, es = _mode_factors(0.25 * gamma * gamma - c * kappa2, gamma, t)
        self.p11 = ec + 0.5 * gamma * es
        self.p12 = -1j * kappa * es
        self.p21 = -1j * c * kappa * es
        self.p22 = ec - 0.5 * gamma * es
        safe = np.where(kappa > 0, kappa, 1.0)
        self.unit = np.stack([np.broadcast_to(k, grid.shape) / safe for k in kd])
        self.unit[:, kappa == 0] = 0.0
        self.decay = math.exp(-gamma * t)
        self.zero = (0,) * grid.d

    def apply_hat(self, rho_hat, j_hat):
        v = np.sum(self.unit * j_hat, axis=0)
        trans = j_hat - self.unit * v
        rho_new = self.p11 * rho_hat + self.p12 * v
        v_new = self.p21 * rho_hat + self.p22 * v
        j_new = self.decay * trans + self.unit * v_new
        # the zero mode of rho is left untouched, bit for bit
        rho_new[self.zero] = rho_hat[self.zero]
        return rho_new, j_new

    def apply(self, state):
        r, j = self.apply_hat(state.rho_hat, state.j_hat)
        return replace(state, rho_hat=r, j_hat=j, time=state.time + self.t)


@lru_cache(maxsize=64)
def _cached_propagator(grid, t, gamma, c):
    return Propagator(grid, t, gamma, c)


def propagator_apply(state, t, gamma, c):
    """e^{tA} applied to a PairState."""
    if t < 0:
        raise ValueError("propagation time must be non-negative")
    return _cached_propagator(state.grid, float(t), float(gamma), float(c)).apply(state)


def mode_matrix(kappa, gamma, c):
    """Generator of one longitudinal mode acting on (rho_hat, j_par_hat)."""
    return np.array([[0.0, -1j * kappa], [-1j * c * kappa, -gamma]])


def mode_energy(rho_hat, j_hat, c):
    return c * np.abs(rho_hat) ** 2 + np.sum(np.abs(j_hat) ** 2, axis=0)


# --- noise ----------------------------------------------------------------


def eigenvalue_grid(grid, eps):
    """lambda_{k, eps} on the FFT-ordered modes of ``grid``."""
    k = np.abs(np.fft.fftfreq(grid.m, 1.0 / grid.m)).astype(int)
    per_axis = eigenvalues_1d(grid.m // 2, eps)[k]
    out = np.ones(grid.shape)
    for ax in range(grid.d):
        shape = [1] * grid.d
        shape[ax] = grid.m
        out = out * per_axis.reshape(shape)
    return out


def check_resolution(grid, eps, tol=RESOLUTION_TOL):
    """Refuse grids whose Nyquist eigenvalue is not negligible."""
    nyq = eigenvalues_1d(grid.m // 2, eps)[-1]
    if nyq >= tol:
        m = grid.m
        while eigenvalues_1d(m // 2, eps)[-1] >= tol:
            m *= 2
        raise ResolutionError(
            f"M={grid.m} under-resolves the noise at eps={eps:g} "
            f"(Nyquist eigenvalue {nyq:.2e} >= {tol:g}); use M={m}",
            suggested_m=m,
        )


@lru_cache(maxsize=64)
def _noise_scale(grid, eps, dt):
    return np.sqrt(eigenvalue_grid(grid, eps) * dt * grid.size / TWO_PI**grid.d)


def sample_noise_increment(eps, dt, grid, rng, s=None):
    """d independent real fields with covariance dt * w_{sqrt2 eps}(x - y).

    ``s`` is accepted for interface symmetry and does not affect the draw:
    the Sobolev weights of the eigenbasis cancel out of the increment.
    """
    if not dt > 0:
        raise ValueError("time step must be positive")
    white = rng.standard_normal((grid.d,) + grid.shape)
    coeffs = transform(white, grid) * _noise_scale(grid, float(eps), float(dt))
    return inverse_transform(coeffs, grid)


# --- drift, stepping ------------------------------------------------------


def drift_interaction(state, potential, dealias=True):
    """Momentum tendency -rho (grad U * rho); the density tendency is zero."""
    grid = state.grid
    out = np.zeros((grid.d,) + grid.shape, dtype=complex)
    if isinstance(potential, ZeroPotential):
        return out
    conv = inverse_transform(TWO_PI**grid.d * potential.gradient_hat(grid) * state.rho_hat, grid)
    out = -transform(state.rho[None] * conv, grid)
    return out * grid.dealias_mask() if dealias else out


@dataclass(frozen=True)
class RidkConfig:
    dt: float
    horizon: float
    gamma: float = 1.0
    sigma: float = 1.0
    n: int = 1000
    eps: float = 0.1
    delta: float = 0.05
    s: float = 0.55
    k_radius: float = 10.0
    potential: object = field(default_factory=ZeroPotential)
    dealias: bool = True
    noise: bool = True

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.horizon < self.dt:
            raise ValueError("horizon must be at least one step")

    @property
    def c(self):
        return self.sigma**2 / (2.0 * self.gamma)

    @property
    def steps(self):
        return int(round(self.horizon / self.dt))

    def regularisation(self, d):
        return RegularisationSpec(self.delta, d)


def noise_tendency(state, config, dW):
    """Coefficients of sigma N^-1/2 h_delta(rho) dW for each momentum component."""
    grid = state.grid
    amp = config.sigma / math.sqrt(config.n) * h_delta(state.rho, config.regularisation(grid.d))
    out = transform(amp[None] * dW, grid)
    return out * grid.dealias_mask() if config.dealias else out


def step_ridk(state, config, rng=None, dW=None, step_index=0):
    """One exponential-Euler step: X <- e^{A dt}[X + dt alpha_U(X) + B(X) dW]."""
    grid = state.grid
    j_hat = state.j_hat
    if not isinstance(config.potential, ZeroPotential):
        j_hat = j_hat + config.dt * drift_interaction(state, config.potential, config.dealias)
    if config.noise and config.sigma > 0:
        if dW is None:
            dW = sample_noise_increment(config.eps, config.dt, grid, rng)
        j_hat = j_hat + noise_tendency(state, config, dW)
    prop = _cached_propagator(grid, float(config.dt), float(config.gamma), float(config.c))
    rho_new, j_new = prop.apply_hat(state.rho_hat, j_hat)
    if not (np.all(np.isfinite(rho_new)) and np.all(np.isfinite(j_new))):
        raise BlowUpError(step_index)
    return PairState(grid, rho_new, j_new, state.time + config.dt)


def initial_state(rho0, grid, eps, j0=None):
    """(rho0 * w_eps, j0 * w_eps) from grid values of rho0 (and optionally j0)."""
    smooth = np.ones(grid.shape)
    k = np.abs(np.fft.fftfreq(grid.m, 1.0 / grid.m)).astype(int)
    per_axis = fourier_ratios(grid.m // 2, eps)[k]
    for ax in range(grid.d):
        shape = [1] * grid.d
        shape[ax] = grid.m
        smooth = smooth * per_axis.reshape(shape)
    rho_hat = transform(np.asarray(rho0, float), grid) * smooth
    if j0 is None:
        j_hat = np.zeros((grid.d,) + grid.shape, dtype=complex)
    else:
        j_hat = transform(np.asarray(j0, float), grid) * smooth
    return PairState(grid, rho_hat, j_hat, 0.0)


@dataclass
class Trajectory:
    times: list
    states: list

    def min_rho(self):
        return min(float(st.rho.min()) for st in self.states)


def solve_noise_free(x0, config, stride=1):
    """Deterministic run with the noise term switched off (A keeps its c)."""
    cfg = replace(config, noise=False)
    state = x0
    times, states = [state.time], [state]
    for n in range(1, cfg.steps + 1):
        state = step_ridk(state, cfg, step_index=n)
        if n % stride == 0 or n == cfg.steps:
            times.append(state.time)
            states.append(state)
    return Trajectory(times, states)


INSIDE, RHO_HIT, NORM_HIT = "inside", "rho-hit", "norm-hit"


def monitor_exit(state, delta, k, s):
    if float(state.rho.min()) <= delta:
        return RHO_HIT
    if pair_norm(state, s) >= k:
        return NORM_HIT
    return INSIDE


def diagnostics_row(state, config):
    return {
        "t": state.time,
        "mass": state.mass(),
        "pair_norm": pair_norm(state, config.s),
        "min_rho": float(state.rho.min()),
        "energy_norm": energy_norm(state, config.c, config.s) if config.c > 0 else pair_norm(state, config.s),
        "exit_status": monitor_exit(state, config.delta, config.k_radius, config.s),
    }


# --- noise norms ----------------------------------------------------------


def _lattice_eigenvalues(eps, s, d, jmax):
    lam = _check_tail(s, eps, jmax)
    full = np.concatenate([lam[:0:-1], lam])
    out = full
    for _ in range(d - 1):
        out = np.multiply.outer(out, full)
    return out


def _weighted_hs_sum(h_coeffs, grid, eps, s, jmax=None):
    """sum_k lambda_k sum_m |h_hat_{m-k}|^2 (1+|m|^2)^s as a lattice convolution."""
    if jmax is None:
        jmax = choose_jmax(s, eps)
    lam = _lattice_eigenvalues(eps, s, grid.d, jmax)
    power = np.fft.fftshift(np.abs(h_coeffs) ** 2)
    conv = fftconvolve(power, lam, mode="full")
    # index of lattice point 0 in the full convolution, per axis
    offset = grid.m // 2 + jmax
    idx = np.arange(conv.shape[0]) - offset
    msq = np.zeros(conv.shape)
    for ax in range(grid.d):
        shape = [1] * grid.d
        shape[ax] = idx.size
        msq = msq + (idx * idx).reshape(shape)
    return float(np.sum(np.clip(conv, 0.0, None) * (1.0 + msq) ** s))


def noise_hs_norm(state, n, eps, s, sigma=1.0, delta=0.05, jmax=None):
    """Squared Hilbert-Schmidt norm of the noise integrand at ``state``.

    Equals d sigma^2/N sum_j alpha_j ||h_delta(rho) f_j||^2_{H^s}; for a
    constant density c >= delta/2 this is d sigma^2 c/N times the Sobolev trace.
    """
    grid = state.grid
    h = h_delta(state.rho, RegularisationSpec(delta, grid.d))
    total = _weighted_hs_sum(transform(h, grid), grid, eps, s, jmax)
    return grid.d * sigma**2 / n * total


def noise_lipschitz_probe(u1, u2, n, eps, s, grid, sigma=1.0, delta=0.05, jmax=None):
    """||B(u1) - B(u2)||_{L2^0(W^s)} / ||u1 - u2||_{H^s} for density fields u1, u2."""
    den = hs_norm(np.asarray(u1) - np.asarray(u2), grid, s)
    if den == 0.0:
        raise ValueError("identical inputs")
    spec = RegularisationSpec(delta, grid.d)
    diff = transform(h_delta(u1, spec) - h_delta(u2, spec), grid)
    num = grid.d * sigma**2 / n * _weighted_hs_sum(diff, grid, eps, s, jmax)
    return math.sqrt(num) / den


# --- vanishing-noise experiment -------------------------------------------


def theoretical_rate(theta, s, d):
    """Slope of (N^-1 eps^-(2s+d))^(1/2) in N along eps = N^(-1/theta)."""
    return -(1.0 - theta_critical(s, d) / theta) / 2.0


def choose_horizon(x0, config, candidates, margin=1.5):
    """Largest candidate T whose noise-free run keeps min rho > margin*delta and norm < k/margin."""
    best = None
    for T in sorted(candidates):
        traj = solve_noise_free(x0, replace(config, horizon=T))
        ok = all(
            float(st.rho.min()) > margin * config.delta and pair_norm(st, config.s) < config.k_radius / margin
            for st in traj.states
        )
        if not ok:
            break
        best = T
    if best is None:
        raise ValueError("no candidate horizon keeps the noise-free run inside the margin")
    return best


@dataclass
class ReplicaOutcome:
    sup_error: float
    exited: bool
    status: str
    exit_time: float
    blew_up: bool = False


def run_replica(x0, reference, config, rng):
    """Stopped sup_t ||X - Z||_{W^s} against a noise-free reference trajectory."""
    state = x0
    sup = 0.0
    status = INSIDE
    try:
        for n in range(1, config.steps + 1):
            state = step_ridk(state, config, rng, step_index=n)
            sup = max(sup, pair_norm(state - reference.states[n], config.s))
            status = monitor_exit(state, config.delta, config.k_radius, config.s)
            if status != INSIDE:
                return ReplicaOutcome(sup, True, status, state.time)
    except BlowUpError:
        return ReplicaOutcome(float("nan"), True, "blow-up", state.time, True)
    return ReplicaOutcome(sup, False, status, state.time)


def convergence_experiment(theta, n_list, replicas, s, config, rho0, m, seeds, check=True):
    """Mean stopped sup-error and no-exit fraction per N along eps = N^(-1/theta).

    ``seeds`` maps (N index, replica index) to a numpy Generator.
    Returns a dict of rows and the fitted slope.
    """
    d = 1
    if theta <= 2 * d:
        raise ValueError(f"theta must exceed 2d = {2 * d}")
    grid = TorusGrid(d, m)
    rows = []
    for a, n in enumerate(n_list):
        eps = float(n) ** (-1.0 / theta)
        if check:
            check_resolution(grid, eps)
        cfg = replace(config, n=int(n), eps=eps, s=s)
        x0 = initial_state(rho0(grid.axis()), grid, eps)
        ref = solve_noise_free(x0, cfg)
        outs = [run_replica(x0, ref, cfg, seeds(a, r)) for r in range(replicas)]
        errs = np.array([o.sup_error for o in outs if not o.blew_up])
        rows.append(
            {
                "N": int(n),
                "eps": eps,
                "error": float(errs.mean()) if errs.size else float("nan"),
                "stderr": float(errs.std(ddof=1) / math.sqrt(errs.size)) if errs.size > 1 else float("nan"),
                "no_exit_fraction": float(np.mean([not o.exited for o in outs])),
                "blow_ups": int(sum(o.blew_up for o in outs)),
                "replicas": replicas,
            }
        )
    slope = loglog_slope([r["N"] for r in rows], [r["error"] for r in rows]) if len(rows) > 1 else float("nan")
    return {"rows": rows, "slope": slope, "theory": theoretical_rate(theta, s, d), "horizon": config.horizon}
