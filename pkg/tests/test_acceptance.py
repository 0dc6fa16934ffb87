"""Acceptance suite: one check per criterion, each printing a PASS/FAIL line.

Run under pytest (lines are echoed in the terminal summary) or directly with
``python3 tests/test_acceptance.py``.
"""
import json
import math
import os
import subprocess
import sys
import tempfile
import time

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from ridklab.cli import SimConfig, faa_di_bruno_residual, integration_by_parts_residual, replica_rng, run
from ridklab.combinatorics import bell_number, enumerate_partitions, identity_residuals
from ridklab.fields import TWO_PI, PairState, TorusGrid
from ridklab.kernel import KernelSpec, evaluate_kernel
from ridklab.particles import CosinePotential, micro_scaling_statistic
from ridklab.ridk import (
    RidkConfig,
    initial_state,
    mode_energy,
    noise_hs_norm,
    propagator_apply,
    sample_noise_increment,
    step_ridk,
)
from ridklab.specfun import bessel_ratio_table, consecutive_ratio_bound
from ridklab.spectrum import loglog_slope, minimise_bound_exponent, sobolev_trace, theta_critical

HERE = os.path.dirname(os.path.abspath(__file__))
sys.path.insert(0, HERE)
from conftest import ACCEPTANCE_LINES  # noqa: E402


def _oracles():
    with open(os.path.join(HERE, "data", "oracles.json")) as fh:
        return json.load(fh)


def _timed(fn):
    t0 = time.perf_counter()
    ok, detail = fn()
    return ok, detail, time.perf_counter() - t0


# --- criteria -------------------------------------------------------------


def bessel_oracle():
    worst, bound_ok = 0.0, True
    for x, ref in _oracles()["bessel"].items():
        x = float(x)
        ref = np.array(ref)
        got = bessel_ratio_table(200, x)
        live = ref > 0
        if not np.array_equal(got > 0, live):
            return False, f"underflow pattern differs at x={x:g}"
        worst = max(worst, float(np.max(np.abs(got[live] / ref[live] - 1))))
        # I_{j+1}/I_j from consecutive table entries, where both are representable
        both = live[:-1] & live[1:]
        cons = got[1:][both] / got[:-1][both]
        bound = np.array([consecutive_ratio_bound(j, x) for j in np.nonzero(both)[0]])
        bound_ok &= bool(np.all(cons < bound))
    return worst < 1e-9 and bound_ok, f"max rel err {worst:.2e}, ratio bound holds: {bound_ok}"


def trace_scaling():
    eps = [0.2, 0.1, 0.05, 0.025]
    parts, ok = [], True
    for d, s in ((1, 0.55), (2, 1.05), (3, 1.55)):
        slope = loglog_slope([1 / e for e in eps], [sobolev_trace(s, e, d) for e in eps])
        target = theta_critical(s, d)
        ok &= abs(slope - target) <= 0.05 * target
        parts.append(f"d={d}: {slope:.3f} vs {target:.2f}")
    (a, b), _ = minimise_bound_exponent(0.55, 1)
    ok &= (a, b) == (0.5, 0.5)
    return ok, "; ".join(parts) + f"; argmin ({a}, {b})"


def _ode_oracle(kappa, gamma, c, t, r0, v0):
    """All modes at once: each system is rescaled to unit time and integrated by DOP853."""

    def rhs(_, y):
        r = y[0] + 1j * y[2]
        v = y[1] + 1j * y[3]
        dr = t * (-1j * kappa * v)
        dv = t * (-1j * c * kappa * r - gamma * v)
        return np.concatenate([dr.real, dv.real, dr.imag, dv.imag])

    y0 = np.concatenate([r0.real, v0.real, r0.imag, v0.imag])
    sol = solve_ivp(lambda s, y: rhs(s, y.reshape(4, -1)), (0, 1), y0, method="DOP853", rtol=1e-13, atol=1e-15)
    y = sol.y[:, -1].reshape(4, -1)
    return y[0] + 1j * y[2], y[1] + 1j * y[3]


def contraction():
    rng = np.random.default_rng(3)
    grid = TorusGrid(1, 64)
    count = 1000
    kappa = rng.integers(0, 32, count)
    gamma = rng.uniform(0.05, 5.0, count)
    c = rng.uniform(0.01, 5.0, count)
    # every fourth pair sits on the double root of its mode
    double = (np.arange(count) % 4 == 0) & (kappa > 0)
    c[double] = gamma[double] ** 2 / (4.0 * kappa[double] ** 2)
    t1, t2 = rng.uniform(0, 3, (2, count))
    r0 = rng.standard_normal(count) + 1j * rng.standard_normal(count)
    v0 = rng.standard_normal(count) + 1j * rng.standard_normal(count)
    got = np.zeros((2, count), complex)
    worst_energy = 0.0
    for i in range(count):
        k = int(kappa[i])
        rho_hat = np.zeros(64, complex)
        j_hat = np.zeros((1, 64), complex)
        rho_hat[k], j_hat[0, k] = r0[i], v0[i]
        x = PairState(grid, rho_hat, j_hat)
        y = propagator_apply(x, t1[i], gamma[i], c[i])
        z = propagator_apply(y, t2[i], gamma[i], c[i])
        e = [float(mode_energy(s_.rho_hat[k], s_.j_hat[:, k], c[i])) for s_ in (x, y, z)]
        worst_energy = max(worst_energy, (e[1] - e[0]) / e[0], (e[2] - e[1]) / max(e[1], 1e-300))
        got[:, i] = y.rho_hat[k], y.j_hat[0, k]
    want_r, want_v = _ode_oracle(kappa, gamma, c, t1, r0, v0)
    want = np.stack([want_r, want_v])
    rel = np.linalg.norm(got - want, axis=0) / np.linalg.norm(want, axis=0)
    worst_ode = float(rel.max())
    ok = worst_energy <= 1e-12 and worst_ode < 1e-8
    return ok, f"max energy growth {worst_energy:.1e}, ODE rel err {worst_ode:.1e}, double-root cases {int(double.sum())}"


def noise_law():
    eps, dt = 0.1, 0.01
    grid = TorusGrid(1, 128)
    rng = np.random.default_rng(4)
    draws = np.stack([sample_noise_increment(eps, dt, grid, rng)[0] for _ in range(10_000)])
    lags = np.arange(20)
    target = dt * evaluate_kernel(grid.axis()[lags], KernelSpec(math.sqrt(2) * eps))
    worst = 0.0
    for lag, want in zip(lags, target):
        per_draw = (draws * np.roll(draws, -lag, axis=1)).mean(axis=1)
        se = per_draw.std(ddof=1) / math.sqrt(per_draw.size)
        worst = max(worst, abs(per_draw.mean() - want) / se)
    a = sample_noise_increment(eps, dt, grid, np.random.default_rng(9), s=0.55)
    b = sample_noise_increment(eps, dt, grid, np.random.default_rng(9), s=2.5)
    same = bool(np.array_equal(a, b))
    return worst <= 3.0 and same, f"max |z| over 20 offsets {worst:.2f}, s-independent: {same}"


def mass_conservation():
    grid = TorusGrid(1, 64)
    x = initial_state((1 + 0.5 * np.cos(grid.axis())) / TWO_PI, grid, 0.3)
    cfg = RidkConfig(dt=0.01, horizon=10.0, n=100, eps=0.3, potential=CosinePotential(0.5))
    rng = np.random.default_rng(5)
    zero = x.rho_hat[0]
    ok = True
    for k in range(1000):
        x = step_ridk(x, cfg, rng, step_index=k)
        ok &= bool(x.rho_hat[0] == zero)
    return ok, f"zero mode after 1000 steps {float(x.rho_hat[0].real)!r} (start {float(zero.real)!r})"


def noise_norm_scaling():
    eps = [0.2, 0.1, 0.05, 0.025]
    parts, ok = [], True
    for d, s in ((1, 0.55), (2, 1.05)):
        grid = TorusGrid(d, 16)
        state = PairState.from_values(grid, np.full(grid.shape, 0.3))
        a, b = noise_hs_norm(state, 100, 0.1, s), noise_hs_norm(state, 10_000, 0.1, s)
        exact_n = abs(a / b - 100.0) <= 1e-12 * 100
        slope = loglog_slope([1 / e for e in eps], [noise_hs_norm(state, 100, e, s) for e in eps])
        target = theta_critical(s, d)
        ok &= exact_n and abs(slope - target) <= 0.05 * target
        parts.append(f"d={d}: 1/N exact {exact_n}, eps-slope {slope:.3f} vs {target:.2f}")
    return ok, "; ".join(parts)


CONVERGENCE = dict(
    kind="convergence", d=1, theta=3.0, n=(1000, 10_000, 100_000), s=0.55, gamma=1.0, sigma=1.0,
    delta=0.25 / TWO_PI, u0=0.1, m=256, dt=0.01, k_radius=2.0, replicas=50, seed=2024,
    allow_underresolved=True,
)


def vanishing_noise():
    rep = run(SimConfig(**CONVERGENCE))
    per_n = rep.fits["per_n"]
    errs = ", ".join(f"{x['error']:.4f}" for x in per_n)
    fracs = ", ".join(f"{x['no_exit_fraction']:.2f}" for x in per_n)
    ok = rep.flags["error_decreasing"] and rep.flags["slope_within_0.1"] and rep.flags["no_exit_non_decreasing"]
    return ok, (
        f"T={rep.fits['horizon']}, errors [{errs}], slope {rep.fits['slope']:.3f} vs {rep.fits['theory']:.2f}, "
        f"no-exit fractions [{fracs}]"
    )


def micro_scaling():
    s = 0.55
    exact = _oracles()["micro_exact_eps0.1_s0.55"]
    stat = micro_scaling_statistic(1000, 0.1, s, 200, [replica_rng(8, 0, r) for r in range(200)])
    z = abs(stat.mean - exact) / stat.stderr
    theta = theta_critical(s, 1)
    means = []
    for a, n in enumerate((1000, 10_000, 100_000)):
        eps = n ** (-1 / theta)
        st = micro_scaling_statistic(n, eps, s, 20, [replica_rng(8, a + 1, r) for r in range(20)])
        means.append(st.mean)
    ratio = max(means) / min(means)
    ok = z <= 3 and ratio < 3
    return ok, f"mean {stat.mean:.5f} vs oracle {exact:.5f} ({z:.2f} se); along scaling [{', '.join(f'{v:.5f}' for v in means)}], max/min {ratio:.3f}"


def identity_checks():
    rng = replica_rng(9, 0, 0)
    single, double = identity_residuals(rng, instances=1000)
    bell = all(len(enumerate_partitions(a)) == bell_number(a) for a in range(1, 9))
    fdb = faa_di_bruno_residual()
    ibp = integration_by_parts_residual(rng)
    ok = single < 1e-12 and double < 1e-12 and bell and fdb < 1e-5 and ibp < 1e-10
    return ok, f"identities {single:.1e}/{double:.1e}, Bell to 8 {bell}, chain rule {fdb:.1e}, IBP {ibp:.1e}"


DETERMINISM_RUNS = {
    "spectrum": ["--eps", "0.2"],
    "trace-scaling": ["--eps", "0.2,0.1,0.05,0.025"],
    "simulate-particles": ["--n", "200", "--eps", "0.3", "--m", "64", "--horizon", "0.2", "--stride", "5"],
    "simulate-ridk": ["--n", "200", "--eps", "0.3", "--m", "64", "--horizon", "0.2", "--u0", "0.2"],
    "compare": ["--n", "200", "--eps", "0.3", "--m", "64", "--horizon", "0.2"],
    "convergence": ["--theta", "3", "--n", "100,1000", "--replicas", "3", "--m", "128", "--horizon", "0.2"],
    "micro-scaling": ["--n", "100,1000", "--replicas", "4"],
    "verify-appendix": [],
}


def determinism():
    differing = []
    with tempfile.TemporaryDirectory() as tmp:
        for kind, extra in DETERMINISM_RUNS.items():
            blobs = []
            for rep in ("a", "b"):
                out = os.path.join(tmp, kind + rep)
                cmd = [sys.executable, "-m", "ridklab.cli", kind, "--seed", "11", "--out", out] + extra
                subprocess.run(cmd, check=False, capture_output=True)
                files = sorted(os.listdir(out))
                blobs.append({f: open(os.path.join(out, f), "rb").read() for f in files})
            if blobs[0] != blobs[1] or not blobs[0]:
                differing.append(kind)
    return not differing, f"{len(DETERMINISM_RUNS)} kinds, differing: {differing or 'none'}"


CRITERIA = [
    (1, "Bessel oracle", bessel_oracle, 60),
    (2, "trace scaling", trace_scaling, 60),
    (3, "contraction", contraction, 60),
    (4, "noise law", noise_law, 120),
    (5, "mass conservation", mass_conservation, 60),
    (6, "noise-norm scaling", noise_norm_scaling, 60),
    (7, "vanishing-noise convergence", vanishing_noise, 1800),
    (8, "micro/meso scaling", micro_scaling, 600),
    (9, "identity and calculus checks", identity_checks, 60),
    (10, "determinism", determinism, None),
]


def evaluate(number):
    _, name, fn, budget = next(c for c in CRITERIA if c[0] == number)
    ok, detail, secs = _timed(fn)
    in_time = budget is None or secs < budget
    passed = ok and in_time
    limit = f" (limit {budget}s)" if budget else ""
    line = f"criterion {number:2d} {name}: {'PASS' if passed else 'FAIL'} | {detail} | {secs:.1f}s{limit}"
    return passed, line


@pytest.mark.parametrize("number", [c[0] for c in CRITERIA])
def test_criterion(number):
    passed, line = evaluate(number)
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert passed, line


if __name__ == "__main__":
    results = [evaluate(c[0]) for c in CRITERIA]
    for _, line in results:
        print(line)
    sys.exit(0 if all(p for p, _ in results) else 1)
