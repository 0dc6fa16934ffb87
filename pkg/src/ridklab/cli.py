"""Command-line experiment runner.

Every run is fixed by its configuration and master seed. Replica ``r`` of
stream ``a`` draws from ``PCG64(replica_seed(replica_seed(master, a), r))``
where ``replica_seed`` is the splitmix64 finaliser applied to
``master + (index + 1) * 0x9E3779B97F4A7C15``.
"""
import argparse
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, fields, replace

import numpy as np

from . import combinatorics, ridk
from .fields import (
    TWO_PI,
    TorusGrid,
    integration_by_parts_sides,
    pair_norm,
    random_bandlimited,
    state_fields,
    write_snapshot,
)
from .kernel import KernelSpec
from .particles import (
    LangevinParams,
    empirical_fields,
    micro_replica,
    micro_grid,
    micro_scaling_exact,
    parse_potential,
    sample_ensemble,
    step_langevin,
)
from .report import ExperimentReport, emit_plotdata, write_report
from .spectrum import EigenSpectrum, loglog_slope, minimise_bound_exponent, sobolev_trace, theta_critical

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15

KINDS = (
    "spectrum",
    "trace-scaling",
    "simulate-particles",
    "simulate-ridk",
    "compare",
    "convergence",
    "micro-scaling",
    "verify-appendix",
)
EMBEDDING_KINDS = ("simulate-ridk", "compare", "convergence")


class ConfigError(ValueError):
    pass


def splitmix64(x):
    z = (x + GOLDEN) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def replica_seed(master, index):
    return splitmix64((int(master) + (int(index) + 1) * GOLDEN) & MASK64)


def replica_rng(master, stream, index):
    return np.random.Generator(np.random.PCG64(replica_seed(replica_seed(master, stream), index)))


@dataclass(frozen=True)
class SimConfig:
    kind: str
    d: int = 1
    eps: tuple = (0.1,)
    theta: float | None = None
    n: tuple = (1000,)
    s: float | None = None
    eta: float | None = None
    gamma: float = 1.0
    sigma: float = 1.0
    delta: float = 0.04
    u0: float = 0.0
    m: int = 256
    dt: float = 0.01
    horizon: float | None = None
    horizon_candidates: tuple = (0.5, 1.0, 2.0, 4.0)
    k_radius: float = 10.0
    replicas: int = 10
    stride: int = 10
    jmax: int | None = None
    allow_underresolved: bool = False
    seed: int = 0
    threads: int | None = None
    out: str | None = None

    @property
    def sobolev(self):
        if self.s is not None:
            return float(self.s)
        if self.eta is not None:
            return self.d / 2.0 + float(self.eta)
        return self.d / 2.0 + 0.05

    def to_dict(self):
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(self).items()}

    def recorded(self):
        """Configuration as stored with results: output location and thread count do not change them."""
        return {k: v for k, v in self.to_dict().items() if k not in ("out", "threads")}

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
        clean = {k: (tuple(v) if isinstance(v, list) else v) for k, v in data.items()}
        return cls(**clean)

    def validate(self):
        if self.kind not in KINDS:
            raise ConfigError(f"kind must be one of {KINDS}")
        if self.d < 1:
            raise ConfigError("d must be >= 1")
        if self.replicas < 1:
            raise ConfigError("replicas must be >= 1")
        if self.kind == "micro-scaling" and self.replicas < 2:
            raise ConfigError("micro-scaling needs replicas >= 2")
        if any(e <= 0 for e in self.eps):
            raise ConfigError("eps values must be positive")
        if self.m < 4 or self.m & (self.m - 1):
            raise ConfigError("m must be a power of two >= 4")
        if not 0 <= self.seed <= MASK64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if self.kind == "convergence":
            if self.theta is None or self.theta <= 2 * self.d:
                raise ConfigError(f"convergence needs theta > 2d = {2 * self.d}")
            if self.d != 1:
                raise ConfigError("convergence is implemented for d = 1")
        if self.kind in EMBEDDING_KINDS:
            if self.sobolev <= self.d / 2.0:
                raise ConfigError(f"s must exceed d/2 = {self.d / 2}")
            if not self.allow_underresolved:
                grid = TorusGrid(self.d, self.m)
                for e in self.working_eps():
                    try:
                        ridk.check_resolution(grid, e)
                    except ridk.ResolutionError as exc:
                        raise ConfigError(f"resolution rule: {exc}") from exc
        return self

    def working_eps(self):
        if self.kind in ("convergence", "micro-scaling") and self.theta is not None:
            return [float(n) ** (-1.0 / self.theta) for n in self.n]
        return list(self.eps)


def _pool_map(fn, items, threads):
    items = list(items)
    threads = threads or os.cpu_count() or 1
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _default_density(x):
    return 1.0 + 0.5 * np.cos(x)


def _rho0_values(grid):
    """Grid values of the separable initial density prod_l (1 + cos(x_l)/2)/(2 pi)."""
    out = np.ones(grid.shape)
    for ax in range(grid.d):
        out = out * _default_density(grid.coordinate(ax)) / TWO_PI
    return out


def _ridk_config(cfg, n, eps):
    return ridk.RidkConfig(
        dt=cfg.dt,
        horizon=cfg.horizon if cfg.horizon is not None else 1.0,
        gamma=cfg.gamma,
        sigma=cfg.sigma,
        n=int(n),
        eps=float(eps),
        delta=cfg.delta,
        s=cfg.sobolev,
        k_radius=cfg.k_radius,
        potential=parse_potential(cfg.u0),
    )


# --- experiments ----------------------------------------------------------


def _spectrum(cfg, rep):
    s = cfg.s if cfg.s is not None else 0.0
    spec = EigenSpectrum.build(cfg.eps[0], cfg.d, cfg.jmax, s)
    for j, lam, w in spec.rows(s):
        rep.rows.append({"j": j, "lambda": lam, "weight": w})
    lam = spec.table
    pos = lam[lam > 0]
    rep.flags["lambda0_is_one"] = bool(lam[0] == 1.0)
    rep.flags["in_unit_interval"] = bool(np.all((lam >= 0) & (lam <= 1)))
    rep.flags["strictly_decreasing"] = bool(np.all(np.diff(pos) < 0))
    rep.figures.append(
        {"name": "eigenvalues", "x": list(range(pos.size)), "y": pos.tolist(), "yerr": [0.0] * pos.size,
         "xlabel": "j", "ylabel": "lambda_j", "yscale": "log"}
    )


def _trace_scaling(cfg, rep):
    s = cfg.sobolev if cfg.s is not None or cfg.eta is not None else 0.55
    eps = sorted(cfg.eps, reverse=True)
    traces = []
    for e in eps:
        t = sobolev_trace(s, e, cfg.d, cfg.jmax)
        traces.append(t)
        rep.rows.append({"eps": e, "inv_eps": 1.0 / e, "trace": t})
    slope = loglog_slope([1.0 / e for e in eps], traces)
    target = theta_critical(s, cfg.d)
    (a, b), val = minimise_bound_exponent(s, cfg.d)
    rep.fits.update({"slope": slope, "theta_critical": target, "argmin_alpha": a, "argmin_beta": b, "min_exponent": val})
    rep.flags["slope_within_5pct"] = abs(slope - target) <= 0.05 * target
    rep.flags["argmin_is_half_half"] = (a, b) == (0.5, 0.5)
    rep.figures.append(
        {"name": "trace", "x": [1.0 / e for e in eps], "y": traces, "yerr": [0.0] * len(eps),
         "xlabel": "1/eps", "ylabel": "trace", "xscale": "log", "yscale": "log", "reference_slope": target}
    )


def _simulate_particles(cfg, rep):
    n, eps = int(cfg.n[0]), cfg.eps[0]
    params = LangevinParams(cfg.gamma, cfg.sigma, parse_potential(cfg.u0))
    rng = replica_rng(cfg.seed, 0, 0)
    ens = sample_ensemble(n, cfg.d, params, rng, _default_density)
    grid, spec = TorusGrid(cfg.d, cfg.m), KernelSpec(eps, cfg.d)
    steps = int(round((cfg.horizon or 1.0) / cfg.dt))
    wrapped = True
    for k in range(steps + 1):
        if k:
            ens = step_langevin(ens, params, cfg.dt, rng)
            wrapped &= bool(np.all((ens.q >= 0) & (ens.q < TWO_PI)))
        if k % cfg.stride == 0 or k == steps:
            st = empirical_fields(ens, spec, grid, time=k * cfg.dt)
            row = {"t": k * cfg.dt, "mass": st.mass(), "pair_norm": pair_norm(st, cfg.sobolev)}
            for ax in range(cfg.d):
                row[f"mean_p{ax + 1}"] = float(ens.p[:, ax].mean())
                row[f"var_p{ax + 1}"] = float(ens.p[:, ax].var())
            rep.rows.append(row)
    if cfg.out:
        write_snapshot(os.path.join(cfg.out, "fields.bin"), state_fields(st), grid)
    rep.flags["positions_wrapped"] = wrapped
    rep.flags["unit_mass"] = all(abs(r["mass"] - 1.0) < 1e-12 for r in rep.rows)
    rep.figures.append(
        {"name": "momentum_variance", "x": [r["t"] for r in rep.rows], "y": [r["var_p1"] for r in rep.rows],
         "yerr": [0.0] * len(rep.rows), "xlabel": "t", "ylabel": "var p", "reference_value": params.momentum_variance}
    )


def _simulate_ridk(cfg, rep):
    n, eps = int(cfg.n[0]), cfg.eps[0]
    grid = TorusGrid(cfg.d, cfg.m)
    rc = _ridk_config(cfg, n, eps)
    state = ridk.initial_state(_rho0_values(grid), grid, eps)
    zero = (0,) * cfg.d
    mass_hat = state.rho_hat[zero]
    rng = replica_rng(cfg.seed, 0, 0)
    rep.rows.append(ridk.diagnostics_row(state, rc))
    ok = True
    try:
        for k in range(1, rc.steps + 1):
            state = ridk.step_ridk(state, rc, rng, step_index=k)
            ok &= bool(state.rho_hat[zero] == mass_hat)
            if k % cfg.stride == 0 or k == rc.steps:
                rep.rows.append(ridk.diagnostics_row(state, rc))
    except ridk.BlowUpError as exc:
        rep.flags["no_blow_up"] = False
        rep.oracle["blow_up_step"] = exc.step
    else:
        rep.flags["no_blow_up"] = True
    if cfg.out:
        write_snapshot(os.path.join(cfg.out, "fields.bin"), state_fields(state), grid)
    rep.flags["mass_bit_identical"] = ok
    rep.figures.append(
        {"name": "min_rho", "x": [r["t"] for r in rep.rows], "y": [r["min_rho"] for r in rep.rows],
         "yerr": [0.0] * len(rep.rows), "xlabel": "t", "ylabel": "min rho", "reference_value": cfg.delta}
    )


def _compare(cfg, rep):
    """Particle system and SPDE from matched initial data; distance of the smoothed fields."""
    n, eps = int(cfg.n[0]), cfg.eps[0]
    grid, spec = TorusGrid(cfg.d, cfg.m), KernelSpec(eps, cfg.d)
    params = LangevinParams(cfg.gamma, cfg.sigma, parse_potential(cfg.u0))
    rc = _ridk_config(cfg, n, eps)
    rng_p, rng_s = replica_rng(cfg.seed, 0, 0), replica_rng(cfg.seed, 1, 0)
    ens = sample_ensemble(n, cfg.d, params, rng_p, _default_density)
    state = ridk.initial_state(_rho0_values(grid), grid, eps)
    for k in range(rc.steps + 1):
        if k:
            ens = step_langevin(ens, params, cfg.dt, rng_p)
            state = ridk.step_ridk(state, rc, rng_s, step_index=k)
        if k % cfg.stride == 0 or k == rc.steps:
            emp = empirical_fields(ens, spec, grid, time=state.time)
            rep.rows.append(
                {"t": k * cfg.dt, "distance": pair_norm(emp - state, cfg.sobolev),
                 "particle_norm": pair_norm(emp, cfg.sobolev), "ridk_norm": pair_norm(state, cfg.sobolev)}
            )
    rep.flags["finite"] = all(math.isfinite(r["distance"]) for r in rep.rows)
    rep.figures.append(
        {"name": "distance", "x": [r["t"] for r in rep.rows], "y": [r["distance"] for r in rep.rows],
         "yerr": [0.0] * len(rep.rows), "xlabel": "t", "ylabel": "||particles - ridk||_W^s"}
    )


def _convergence(cfg, rep):
    s, theta = cfg.sobolev, cfg.theta
    grid = TorusGrid(1, cfg.m)
    eps_list = [float(n) ** (-1.0 / theta) for n in cfg.n]
    horizon = cfg.horizon
    if horizon is None:
        horizon = min(
            ridk.choose_horizon(ridk.initial_state(_rho0_values(grid), grid, e), _ridk_config(cfg, n, e),
                                cfg.horizon_candidates)
            for n, e in zip(cfg.n, eps_list)
        )
    rep.fits["horizon"] = horizon
    base = replace(_ridk_config(cfg, cfg.n[0], eps_list[0]), horizon=horizon)
    for a, (n, eps) in enumerate(zip(cfg.n, eps_list)):
        rc = replace(base, n=int(n), eps=eps)
        x0 = ridk.initial_state(_rho0_values(grid), grid, eps)
        ref = ridk.solve_noise_free(x0, rc)
        outs = _pool_map(lambda r: ridk.run_replica(x0, ref, rc, replica_rng(cfg.seed, a, r)), range(cfg.replicas),
                         cfg.threads)
        for r, o in enumerate(outs):
            rep.rows.append(
                {"N": int(n), "eps": eps, "replica": r, "seed": replica_seed(replica_seed(cfg.seed, a), r),
                 "sup_error": o.sup_error, "exited": int(o.exited), "status": o.status, "exit_time": o.exit_time}
            )
    summary = _convergence_summary(rep.rows, cfg.n)
    slope = loglog_slope([x["N"] for x in summary], [x["error"] for x in summary])
    theory = ridk.theoretical_rate(theta, s, 1)
    rep.fits.update({"slope": slope, "theory": theory, "per_n": summary})
    errs = [x["error"] for x in summary]
    fracs = [x["no_exit_fraction"] for x in summary]
    rep.flags["error_decreasing"] = all(b < a for a, b in zip(errs, errs[1:]))
    rep.flags["slope_within_0.1"] = abs(slope - theory) <= 0.1
    rep.flags["slope_at_most_-0.10"] = slope <= -0.10
    rep.flags["no_exit_non_decreasing"] = all(b >= a for a, b in zip(fracs, fracs[1:]))
    rep.figures.append(
        {"name": "convergence", "x": [x["N"] for x in summary], "y": errs, "yerr": [x["stderr"] for x in summary],
         "xlabel": "N", "ylabel": "E sup ||X - Z||_W^s", "xscale": "log", "yscale": "log", "reference_slope": theory}
    )


def _convergence_summary(rows, n_list):
    out = []
    for n in n_list:
        sel = [r for r in rows if r["N"] == int(n)]
        e = np.array([r["sup_error"] for r in sel if math.isfinite(r["sup_error"])])
        out.append(
            {"N": int(n), "error": float(e.mean()), "stderr": float(e.std(ddof=1) / math.sqrt(e.size)) if e.size > 1 else 0.0,
             "no_exit_fraction": float(np.mean([1 - r["exited"] for r in sel]))}
        )
    return out


def _micro_scaling(cfg, rep):
    s, d = cfg.sobolev if (cfg.s is not None or cfg.eta is not None) else 0.55, cfg.d
    theta = cfg.theta if cfg.theta is not None else theta_critical(s, d)
    per_n = []
    for a, n in enumerate(cfg.n):
        eps = float(n) ** (-1.0 / theta)
        grid = micro_grid(eps, s, d)
        vals = _pool_map(lambda r: micro_replica(int(n), eps, s, replica_rng(cfg.seed, a, r), d, grid),
                         range(cfg.replicas), cfg.threads)
        for r, (c, u) in enumerate(vals):
            rep.rows.append({"N": int(n), "eps": eps, "s": s, "replica": r,
                             "seed": replica_seed(replica_seed(cfg.seed, a), r), "value": c, "uncentred": u})
        arr = np.array([v[0] for v in vals])
        exact = micro_scaling_exact(eps, s, d)
        se = float(arr.std(ddof=1) / math.sqrt(arr.size))
        per_n.append({"N": int(n), "eps": eps, "mean": float(arr.mean()), "stderr": se, "exact": exact,
                      "uncentred_mean": float(np.mean([v[1] for v in vals]))})
    means = [x["mean"] for x in per_n]
    rep.fits.update({"theta": theta, "per_n": per_n, "max_over_min": max(means) / min(means)})
    rep.flags["oracle_within_3se"] = all(abs(x["mean"] - x["exact"]) <= 3 * x["stderr"] for x in per_n)
    rep.flags["bounded_ratio_below_3"] = max(means) / min(means) < 3.0
    rep.figures.append(
        {"name": "micro", "x": [x["N"] for x in per_n], "y": means, "yerr": [x["stderr"] for x in per_n],
         "xlabel": "N", "ylabel": "S", "xscale": "log", "oracle": [x["exact"] for x in per_n]}
    )


def _verify_appendix(cfg, rep):
    rng = replica_rng(cfg.seed, 0, 0)
    single, double = combinatorics.identity_residuals(rng)
    checks = [("product_difference", single, 1e-12), ("double_difference", double, 1e-12)]
    bell_ok = all(len(combinatorics.enumerate_partitions(a)) == combinatorics.bell_number(a) for a in range(1, 9))
    checks.append(("bell_numbers_to_8", 0.0 if bell_ok else 1.0, 0.0))
    checks.append(("faa_di_bruno_vs_fd", faa_di_bruno_residual(), 1e-5))
    checks.append(("integration_by_parts", integration_by_parts_residual(rng), 1e-10))
    for name, value, tol in checks:
        passed = value <= tol
        rep.rows.append({"check": name, "residual": float(value), "tolerance": tol, "pass": int(passed)})
        rep.flags[name] = passed


def faa_di_bruno_residual(delta=1.0, m=64, step=1e-3):
    """Worst relative error of the partition formula against nested central differences (d = 2)."""
    grid = TorusGrid(2, m)
    spec = ridk.RegularisationSpec(delta, 2)

    def u_at(pts):
        return 0.5 + 0.2 * np.cos(pts[..., 0]) + 0.1 * np.sin(pts[..., 1])

    pts = grid.points()
    u = u_at(pts)
    keep = np.abs(np.abs(u) - spec.threshold) > 10 * step
    worst = 0.0
    for axes in ((0,), (1,), (0, 1), (0, 0), (1, 1)):
        formula = combinatorics.faa_di_bruno_derivative(spec, u, grid, axes)
        fd = combinatorics.nested_central_difference(lambda x: ridk.h_delta(u_at(x), spec), pts, list(axes), step)
        scale = max(np.max(np.abs(fd[keep])), 1e-300)
        worst = max(worst, float(np.max(np.abs(formula - fd)[keep]) / scale))
    return worst


def integration_by_parts_residual(rng, d=2, m=32, s=0.8):
    grid = TorusGrid(d, m)
    u = random_bandlimited(grid, rng, 1.0)
    vec = random_bandlimited(grid, rng, 1.0, size=d)
    lhs, rhs = integration_by_parts_sides(u, vec, grid, s)
    return abs(lhs - rhs) / max(abs(lhs), abs(rhs), 1e-300)


EXPERIMENTS = {
    "spectrum": _spectrum,
    "trace-scaling": _trace_scaling,
    "simulate-particles": _simulate_particles,
    "simulate-ridk": _simulate_ridk,
    "compare": _compare,
    "convergence": _convergence,
    "micro-scaling": _micro_scaling,
    "verify-appendix": _verify_appendix,
}


def run(cfg):
    """Validate, run, and (if ``cfg.out`` is set) write CSV, JSON summary and plot data."""
    cfg.validate()
    rep = ExperimentReport(cfg.kind, cfg.recorded())
    if cfg.out:
        os.makedirs(cfg.out, exist_ok=True)
    try:
        EXPERIMENTS[cfg.kind](cfg, rep)
    except Exception:
        rep.completed = False
        if cfg.out:
            write_report(rep, cfg.out)
        raise
    if cfg.out:
        write_report(rep, cfg.out)
        emit_plotdata(rep, cfg.out)
    return rep


# --- argument parsing -----------------------------------------------------


def _floats(text):
    return tuple(float(v) for v in text.split(",") if v.strip())


def _ints(text):
    return tuple(int(float(v)) for v in text.split(",") if v.strip())


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON configuration file; flags override it")
    common.add_argument("--seed", type=int)
    common.add_argument("--out")
    common.add_argument("--replicas", type=int)
    common.add_argument("--threads", type=int)
    common.add_argument("--d", type=int)
    common.add_argument("--eps", type=_floats, help="comma-separated widths")
    common.add_argument("--theta", type=float)
    common.add_argument("--n", "--N", dest="n", type=_ints, help="comma-separated particle counts")
    common.add_argument("--s", type=float)
    common.add_argument("--eta", type=float)
    common.add_argument("--gamma", type=float)
    common.add_argument("--sigma", type=float)
    common.add_argument("--delta", type=float)
    common.add_argument("--u0", type=float)
    common.add_argument("--m", "--M", dest="m", type=int)
    common.add_argument("--dt", type=float)
    common.add_argument("--horizon", "--T", dest="horizon", type=float)
    common.add_argument("--k-radius", dest="k_radius", type=float)
    common.add_argument("--stride", type=int)
    common.add_argument("--jmax", type=int)
    common.add_argument("--allow-underresolved", dest="allow_underresolved", action="store_true", default=None)
    parser = argparse.ArgumentParser(prog="ridklab", description="RIDK numerical laboratory")
    sub = parser.add_subparsers(dest="kind", required=True)
    for kind in KINDS:
        sub.add_parser(kind, parents=[common])
    return parser


def config_from_args(args):
    data = {}
    if args.config:
        with open(args.config) as fh:
            data.update(json.load(fh))
    for f in fields(SimConfig):
        v = getattr(args, f.name, None)
        if v is not None and f.name != "kind":
            data[f.name] = v
    data["kind"] = args.kind
    return SimConfig.from_dict(data)


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(args)
        rep = run(cfg)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for name, ok in rep.flags.items():
        print(f"{'PASS' if ok else 'FAIL'} {name}")
    for key, val in rep.fits.items():
        if not isinstance(val, (list, dict)):
            print(f"{key} = {val}")
    return 0 if rep.passed else 1


if __name__ == "__main__":
    sys.exit(main())
