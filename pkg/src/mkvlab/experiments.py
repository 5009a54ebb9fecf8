"""Experiment drivers behind the CLI: build, run, emit CSVs, manifest."""

from __future__ import annotations

import time
from pathlib import Path

import numpy as np

from . import __version__
from .burgers import compare_particle_pde, default_pde_grid, fd_solve, PdeGrid
from .chaos import (
    Neighborhood,
    chaos_gap,
    marginal_tv,
    sanov_rate_check,
    tail_probability,
    tv_bound_chain,
)
from .coefficients import make_constant_drift, zero_drift
from .config import (
    build_drift,
    build_functional,
    build_g,
    build_grid,
    build_lambda0,
    build_sigma,
    EXPERIMENTS,
)
from .engine import simulate_coupled, simulate_frozen
from .errors import ConfigError
from .girsanov import (
    consistency_report,
    martingale_report,
    path_relative_entropy,
    placeholder_cloud,
)
from .measures import kl_hist, shared_histograms
from .picard import picard_solve
from .runio import RunManifest, collect_checksums, config_hash, emit_csv, write_manifest
from .streams import ITER_GIRSANOV, NoiseBank

_NAN = float("nan")


def run_experiment(experiment: str, cfg: dict, out_dir) -> RunManifest:
    """Execute one experiment; returns the manifest written to out_dir."""
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {experiment!r}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    driver = {
        "solve-mkv": _solve_mkv,
        "simulate-particles": _simulate_particles,
        "chaos-metrics": _chaos_metrics,
        "burgers-compare": _burgers_compare,
        "sanov-check": _sanov_check,
        "girsanov-check": _girsanov_check,
    }[experiment]
    outputs = driver(cfg, out)
    manifest = RunManifest(
        schema=1,
        experiment=experiment,
        config_hash=config_hash(cfg),
        code_version=__version__,
        seed=cfg["seed"],
        outputs=collect_checksums(outputs),
        wall_clock_seconds=time.perf_counter() - t0,
    )
    write_manifest(manifest, out)
    return manifest


def _context(cfg):
    grid = build_grid(cfg)
    sigma = build_sigma(cfg)
    lambda0 = build_lambda0(cfg)
    drift = build_drift(cfg, sigma)
    bank = NoiseBank(cfg["seed"])
    return grid, sigma, lambda0, drift, bank


def _solve_reference(cfg, grid, sigma, lambda0, drift, bank):
    pc = cfg["picard"]
    return picard_solve(
        drift, sigma, lambda0, grid,
        m=pc["m"], max_iter=pc["max_iter"], tol=float(pc["tol"]),
        bank=bank, bins=pc["bins"],
        common_noise=pc["common_noise"],
    )


def _solve_mkv(cfg, out: Path) -> list:
    grid, sigma, lambda0, drift, bank = _context(cfg)
    cloud, diag = _solve_reference(cfg, grid, sigma, lambda0, drift, bank)
    times = grid.times()
    diag_rows = []
    for rec in diag.records:
        for t_idx in range(grid.steps + 1):
            diag_rows.append(
                (rec.index, float(times[t_idx]), float(rec.tv_profile[t_idx]), rec.entropy_proxy)
            )
    files = [
        emit_csv(
            diag_rows,
            [("iteration", "int"), ("t", "float"), ("tv", "float"), ("entropy_proxy", "float")],
            out / "picard_diagnostics.csv",
        ),
        emit_csv(
            [
                (
                    diag.converged,
                    diag.iterations,
                    float(diag.records[-1].terminal_tv),
                    diag.stopping_reason,
                )
            ],
            [
                ("converged", "bool"),
                ("iterations", "int"),
                ("terminal_tv", "float"),
                ("stopping_reason", "str"),
            ],
            out / "solve_summary.csv",
        ),
        emit_csv(
            [(i, float(v)) for i, v in enumerate(cloud.marginal(grid.steps))],
            [("particle", "int"), ("value", "float")],
            out / "solution_terminal.csv",
        ),
    ]
    if cfg["output"]["dump_paths"]:
        files.append(_dump_paths([cloud], out / "solution_paths.csv"))
    return files


def _dump_paths(clouds, path):
    rows = []
    for replica, cloud in enumerate(clouds):
        for particle in range(cloud.size):
            for step in range(cloud.grid.steps + 1):
                for coord in range(cloud.dim):
                    rows.append(
                        (replica, particle, step, coord, float(cloud.paths[particle, step, coord]))
                    )
    return emit_csv(
        rows,
        [
            ("replica", "int"),
            ("particle", "int"),
            ("step", "int"),
            ("coordinate", "int"),
            ("value", "float"),
        ],
        path,
    )


def _simulate_particles(cfg, out: Path) -> list:
    grid, sigma, lambda0, drift, bank = _context(cfg)
    clouds = [
        simulate_coupled(drift, sigma, lambda0, cfg["particles"]["n"], grid, bank, replica=r)
        for r in range(cfg["particles"]["replicas"])
    ]
    return [_dump_paths(clouds, out / "paths.csv")]


def _chaos_metrics(cfg, out: Path) -> list:
    grid, sigma, lambda0, drift, bank = _context(cfg)
    threads = cfg["threads"]
    mu, _ = _solve_reference(cfg, grid, sigma, lambda0, drift, bank)
    phi = build_functional(cfg, mu)
    hood = Neighborhood.around(mu, [phi], float(cfg["neighborhood"]["epsilon"]))
    ch = cfg["chaos"]
    reps = ch["replicas"]
    reps_list = reps if isinstance(reps, list) else [reps] * len(ch["n_list"])
    rows = []
    for n, n_reps in zip(ch["n_list"], reps_list):
        gap = chaos_gap(n, n_reps, mu, drift, sigma, lambda0, bank, threads)
        bound = tv_bound_chain(ch["k"], n, gap.estimate, drift.bound, grid.horizon)
        mtv = marginal_tv(
            n, n_reps, grid.horizon, mu, drift, sigma, lambda0, bank,
            bins=cfg["metrics"]["bins"], threads=threads,
        )
        tail = tail_probability(hood, n, n_reps, drift, sigma, lambda0, grid, bank, threads)
        rows.append(("chaos_gap", n, 1, gap.estimate, gap.se, _NAN, False))
        rows.append(("tv_bound_chain", n, ch["k"], bound.value, _NAN, bound.value, bound.vacuous))
        rows.append(("marginal_tv", n, 1, mtv.tv, mtv.noise_floor, _NAN, False))
        rows.append(("tail_probability", n, 1, tail.p_hat, tail.se, _NAN, False))
    return [
        emit_csv(
            rows,
            [
                ("experiment", "str"),
                ("n", "int"),
                ("k", "int"),
                ("estimate", "float"),
                ("stderr", "float"),
                ("bound", "float"),
                ("vacuous_flag", "bool"),
            ],
            out / "chaos_metrics.csv",
        )
    ]


def _pde_grid_from_cfg(cfg, lambda0, sup_g) -> PdeGrid:
    pde = cfg["pde"]
    horizon = float(cfg["grid"]["T"])
    if pde["x_min"] is None or pde["x_max"] is None or pde["nt"] is None:
        grid = default_pde_grid(lambda0, horizon, sup_g, nx=pde["nx"])
        if pde["x_min"] is not None or pde["x_max"] is not None:
            lo = float(pde["x_min"]) if pde["x_min"] is not None else grid.x_min
            hi = float(pde["x_max"]) if pde["x_max"] is not None else grid.x_max
            probe = PdeGrid(lo, hi, pde["nx"], 1, horizon)
            nt = pde["nt"] or int(np.ceil(horizon / (0.9 * probe.cfl_limit(sup_g))))
            grid = PdeGrid(lo, hi, pde["nx"], nt, horizon)
        return grid
    return PdeGrid(float(pde["x_min"]), float(pde["x_max"]), pde["nx"], pde["nt"], horizon)


def _burgers_compare(cfg, out: Path) -> list:
    grid, sigma, lambda0, drift, bank = _context(cfg)
    if drift.kind != "rank":
        raise ConfigError("burgers-compare requires drift.kind == rank")
    if sigma.kind != "identity":
        raise ConfigError("burgers-compare requires the identity volatility")
    g = build_g(cfg)
    pde_grid = _pde_grid_from_cfg(cfg, lambda0, g.sup_abs())
    times = cfg["compare"]["times"] or [grid.horizon]
    rows = compare_particle_pde(
        cfg["particles"]["n"], cfg["compare"]["replicas"], drift, lambda0,
        pde_grid, times, grid, bank, threads=cfg["threads"],
    )
    comparison = emit_csv(
        [(r.time, r.sup_err, r.l1_err, r.samples) for r in rows],
        [("t", "float"), ("sup_err", "float"), ("l1_err", "float"), ("samples", "int")],
        out / "cdf_comparison.csv",
    )
    mult = int(np.ceil(pde_grid.nt / grid.steps))
    aligned = PdeGrid(pde_grid.x_min, pde_grid.x_max, pde_grid.nx, mult * grid.steps, pde_grid.horizon)
    sol = fd_solve(g, lambda0, aligned, store_every=mult)
    xs = aligned.xs()
    pde_rows = []
    for t in times:
        row = sol.row_at(grid.index_of(t) * grid.dt)
        for x, v in zip(xs, row):
            pde_rows.append((float(t), float(x), float(v)))
    solution = emit_csv(
        pde_rows,
        [("t", "float"), ("x", "float"), ("V", "float")],
        out / "pde_solution.csv",
    )
    return [comparison, solution]


def _sanov_check(cfg, out: Path) -> list:
    grid, sigma, lambda0, drift, bank = _context(cfg)
    mu, _ = _solve_reference(cfg, grid, sigma, lambda0, drift, bank)
    phi = build_functional(cfg, mu)
    table = sanov_rate_check(
        phi, float(cfg["neighborhood"]["epsilon"]),
        cfg["chaos"]["n_list"], cfg["chaos"]["replicas"],
        mu, drift, sigma, lambda0, bank, threads=cfg["threads"],
    )
    rows = [
        (r.n, r.replicas, r.exceedances, r.p_hat, r.rate_estimate, r.rate_is_lower_bound, r.limit_rate)
        for r in table.rows
    ]
    return [
        emit_csv(
            rows,
            [
                ("n", "int"),
                ("replicas", "int"),
                ("exceedances", "int"),
                ("p_hat", "float"),
                ("rate_estimate", "float"),
                ("rate_is_lower_bound", "bool"),
                ("limit_rate", "float"),
            ],
            out / "sanov_table.csv",
        ),
        emit_csv(
            [(table.epsilon, table.reference, table.non_monotone, table.degenerate)],
            [
                ("epsilon", "float"),
                ("reference", "float"),
                ("non_monotone", "bool"),
                ("degenerate", "bool"),
            ],
            out / "sanov_summary.csv",
        ),
    ]


def _girsanov_check(cfg, out: Path) -> list:
    grid, sigma, lambda0, drift, bank = _context(cfg)
    gv = cfg["girsanov"]
    m = gv["m"]
    delta = float(gv["delta"])
    rows = []

    base = zero_drift(1)
    shifted = make_constant_drift(delta, sigma)
    holder = placeholder_cloud(grid, 1)
    entropy = path_relative_entropy(holder, shifted, base, sigma, grid.horizon)
    expected = 0.5 * grid.horizon * (delta / sigma.scale) ** 2
    rows.append(("entropy_identity", entropy, expected, _NAN))

    gbank = bank.with_iteration(ITER_GIRSANOV)
    cloud_a = simulate_frozen(base, sigma, holder, lambda0, m, gbank, replica=10)
    cloud_b = simulate_frozen(shifted, sigma, holder, lambda0, m, gbank, replica=11)
    ha, hb = shared_histograms(
        cloud_b.marginal(grid.steps), cloud_a.marginal(grid.steps), cfg["metrics"]["bins"]
    )
    alpha = float(cfg["metrics"]["laplace_alpha"]) or 1e-4
    rows.append(("marginal_kl", kl_hist(ha, hb, laplace_alpha=alpha), expected, _NAN))

    mart = martingale_report(drift, sigma, lambda0, grid, m, bank)
    rows.append(("martingale_mean_z", mart.mean_z, 1.0, mart.se))

    from .chaos import PathFunctional

    phi = PathFunctional.terminal_leq(float(gv["phi_threshold"]))
    cons = consistency_report(
        make_constant_drift(float(gv["const_shift"]), sigma), sigma, lambda0,
        grid, m, bank, lambda cloud: phi.evaluate(cloud),
    )
    rows.append(("consistency_direct", cons.direct, cons.weighted, cons.combined_se))

    return [
        emit_csv(
            rows,
            [("check", "str"), ("value", "float"), ("reference", "float"), ("se", "float")],
            out / "girsanov_checks.csv",
        )
    ]
