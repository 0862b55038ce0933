"""Command-line interface.

Exit codes: 0 success/pass, 1 configuration error, 2 verification failure,
3 runtime (solver) failure.
"""
from __future__ import annotations

import json
import logging
import math
import os
import sys
from pathlib import Path

import click
import numpy as np

from . import harness as H
from .besov import BesovParams, filter_bank, paraproduct, product_law_ratio, remainder, dealiased_product
from .config import Config, help_text, load_config
from .errors import ConfigError, DegenerateFit, NoAdmissibleConstants, OberbeckError
from .linmodes import integrated_bound_ratios, strichartz_ratio, verify_decay, write_sweep_csv
from .solvers import (
    CompressibleStepper,
    PhysParams,
    PotentialCache,
    PotentialSpec,
    relation_check,
)
from .spectral import GridSpec, SpectralField, fft, leray_project, random_field, set_threads, write_snapshot

EXIT_OK, EXIT_CONFIG, EXIT_VERIFY, EXIT_RUNTIME = 0, 1, 2, 3

log = logging.getLogger("oberbeck")


def _fail(code: int, msg: str):
    click.echo(msg, err=True)
    raise SystemExit(code)


def _common(f):
    f = click.option("--format", "fmt", type=click.Choice(["csv", "json"]), default=None, help="report format")(f)
    f = click.option("--threads", type=int, default=None, help="FFT threads (default: OBERBECK_THREADS or 1)")(f)
    f = click.option("--seed", type=int, default=None, help="override [initial_data] seed")(f)
    f = click.option("--out", type=click.Path(file_okay=False), default=None, help="override [output] dir")(f)
    f = click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None, help="INI config file")(f)
    return f


def _setup(config_path, out, seed, threads, fmt) -> tuple[Config, Path, str]:
    overrides = {}
    if seed is not None:
        overrides[("initial_data", "seed")] = seed
    if out is not None:
        overrides[("output", "dir")] = out
    if fmt is not None:
        overrides[("output", "format")] = fmt
    try:
        cfg = load_config(config_path, overrides)
    except ConfigError as exc:
        _fail(EXIT_CONFIG, f"config error: {exc}")
    if threads is None:
        threads = int(os.environ.get("OBERBECK_THREADS", "1") or 1)
    set_threads(threads)
    outdir = Path(cfg.get("output", "dir"))
    outdir.mkdir(parents=True, exist_ok=True)
    fmt = cfg.get("output", "format")
    if fmt not in ("csv", "json"):
        _fail(EXIT_CONFIG, f"config error: [output] format must be csv or json, got {fmt!r}")
    return cfg, outdir, fmt


def _grid(cfg: Config) -> GridSpec:
    return GridSpec(cfg.i("grid", "dim"), cfg.i("grid", "n"), cfg.f("grid", "L"), cfg.f("grid", "dealias_fraction"))


def _potential(cfg: Config) -> PotentialSpec:
    return PotentialSpec(
        cfg.get("potential", "profile"),
        cfg.f("potential", "amplitude"),
        cfg.f("potential", "width"),
        None,
        cfg.f("potential", "mod_amplitude"),
        cfg.f("potential", "mod_frequency"),
    )


def build_plan(cfg: Config, threads: int | None = None) -> H.ExperimentPlan:
    variant = cfg.get("physics", "variant")
    outdir = Path(cfg.get("output", "dir"))
    return H.ExperimentPlan(
        variant=variant,
        eps_ladder=cfg.floats("time", "eps_ladder"),
        grid=_grid(cfg),
        mu=cfg.f("physics", "mu"),
        lam=cfg.f("physics", "lambda"),
        kappa=cfg.f("physics", "kappa"),
        potential=_potential(cfg),
        data=H.InitialDataSpec(
            cfg.i("initial_data", "seed"),
            cfg.f("initial_data", "amplitude"),
            cfg.f("initial_data", "osc_amplitude"),
            cfg.f("initial_data", "width"),
            cfg.b("initial_data", "ill_prepared"),
        ),
        osc_pairs=cfg.pairs("norms", "osc_pairs"),
        incomp_pairs=cfg.pairs("norms", "incomp_pairs"),
        T=cfg.f("time", "T"),
        dt=cfg.f("time", "dt"),
        stride=cfg.i("time", "stride"),
        nonlinear=cfg.b("time", "nonlinear"),
        scheme=cfg.get("time", "scheme"),
        workers=cfg.i("output", "workers"),
        threads=threads,
        snapshot_dir=str(outdir / "snapshots") if cfg.b("output", "snapshots") else None,
    )


@click.group(epilog=help_text(), context_settings={"max_content_width": 120})
@click.option("-v", "--verbose", is_flag=True, help="debug logging")
def main(verbose):
    """Low-Mach Oberbeck-Boussinesq limit: spectral solvers and convergence verification."""
    logging.basicConfig(level=logging.DEBUG if verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")


@main.command("linear-verify", epilog=help_text())
@_common
def linear_verify(config_path, out, seed, threads, fmt):
    """Sweep the per-mode linear system and search decay constants (C, c)."""
    cfg, outdir, fmt = _setup(config_path, out, seed, threads, fmt)
    n_r = cfg.i("linear", "r_count")
    if n_r <= 0:
        _fail(EXIT_CONFIG, "config error: [linear] r_count must be positive (empty frequency grid)")
    r = np.geomspace(cfg.f("linear", "r_min"), cfg.f("linear", "r_max"), n_r)
    t = np.linspace(0.0, cfg.f("linear", "t_max"), cfg.i("linear", "t_count"))
    kt, variant = cfg.f("linear", "kappa_t"), cfg.get("linear", "variant")
    try:
        res = verify_decay(kt, variant, r, t, C_budget=cfg.f("linear", "C_budget"))
    except NoAdmissibleConstants as exc:
        _fail(EXIT_VERIFY, f"verification failure: {exc}")
    except (ValueError, OberbeckError) as exc:
        _fail(EXIT_CONFIG, f"config error: {exc}")
    write_sweep_csv(res.rows, outdir / "linear_sweep.csv")
    ints = integrated_bound_ratios(kt, variant, r[:: max(1, n_r // 25)])
    summary = {"variant": variant, "kappa_t": kt, "C": res.C, "c": res.c, "passed": res.passed, "failures": res.failures, **ints}
    (outdir / "linear_summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    click.echo(json.dumps(summary, sort_keys=True))
    raise SystemExit(EXIT_OK if res.passed else EXIT_VERIFY)


@main.command("strichartz", epilog=help_text())
@_common
def strichartz(config_path, out, seed, threads, fmt):
    """Free acoustic Strichartz ratios for Gaussian data on the configured grid."""
    cfg, outdir, fmt = _setup(config_path, out, seed, threads, fmt)
    grid = _grid(cfg)
    ld = H.make_limit_data(grid, H.InitialDataSpec(cfg.i("initial_data", "seed"), 1.0, 1.0, cfg.f("initial_data", "width")))
    bank = filter_bank(grid)
    rows = []
    for p in cfg.floats("strichartz", "p_values"):
        ratio = strichartz_ratio(ld.q0, ld.Qu0, p, cfg.f("strichartz", "s"), cfg.f("strichartz", "T"), bank, cfg.i("strichartz", "nt"))
        rows.append({"p": p, "s": cfg.f("strichartz", "s"), "ratio": ratio})
    (outdir / "strichartz.json").write_text(json.dumps(rows, indent=2) + "\n")
    for r in rows:
        click.echo(f"p={r['p']:g} s={r['s']:g} ratio={r['ratio']:.6g}")
    ok = all(np.isfinite(r["ratio"]) for r in rows)
    raise SystemExit(EXIT_OK if ok else EXIT_VERIFY)


@main.command("besov-test", epilog=help_text())
@_common
def besov_test(config_path, out, seed, threads, fmt):
    """Paraproduct decomposition and product-law checks on random fields."""
    cfg, outdir, fmt = _setup(config_path, out, seed, threads, fmt)
    grid = _grid(cfg)
    bank = filter_bank(grid)
    rng = np.random.default_rng(cfg.i("initial_data", "seed"))
    f = random_field(grid, rng, kcut=grid.n / 4)
    g = random_field(grid, rng, kcut=grid.n / 4)
    fg = dealiased_product(f, g)
    bony = fg - paraproduct(f, g, bank) - remainder(g, f, bank)
    resid = bony.l2_norm() / max(fg.l2_norm(), 1e-300)
    ratio = product_law_ratio(f, g, 0.5, 0.5, 2.0, 1.0, "+", bank)
    res = {"bony_relative_residual": resid, "product_law_ratio": ratio, "blocks": [bank.j_min, bank.j_max]}
    (outdir / "besov_test.json").write_text(json.dumps(res, indent=2) + "\n")
    click.echo(json.dumps(res))
    raise SystemExit(EXIT_OK if resid < 1e-10 and np.isfinite(ratio) else EXIT_VERIFY)


@main.command("simulate", epilog=help_text())
@_common
def simulate(config_path, out, seed, threads, fmt):
    """Single compressible run at [time] eps with snapshots and diagnostics."""
    cfg, outdir, fmt = _setup(config_path, out, seed, threads, fmt)
    try:
        plan = build_plan(cfg, threads)
        eps = cfg.f("time", "eps")
        plan = H.replace(plan, eps_ladder=(eps,), snapshot_dir=str(outdir / "snapshots"))
    except (ValueError, ConfigError) as exc:
        _fail(EXIT_CONFIG, f"config error: {exc}")
    try:
        traj = H.run_single(plan, eps, keep_states=True)
    except OberbeckError as exc:
        _fail(EXIT_RUNTIME, f"runtime failure at eps={eps:g}: {exc}")
    diag = {"eps": eps, "steps": traj.steps, "final_time": float(traj.times[-1])}
    if plan.variant == "conducting":
        pot = None if plan.potential.is_zero else PotentialCache(plan.potential, plan.grid)
        st = traj.states[-1]
        diag["relation_residual"] = relation_check(st, pot.field(st.t) if pot else None)
    (outdir / "simulate.json").write_text(json.dumps(diag, indent=2) + "\n")
    click.echo(json.dumps(diag))
    raise SystemExit(EXIT_OK)


@main.command("converge", epilog=help_text())
@_common
def converge(config_path, out, seed, threads, fmt):
    """eps-ladder convergence experiment: fits and report."""
    cfg, outdir, fmt = _setup(config_path, out, seed, threads, fmt)
    try:
        plan = build_plan(cfg, threads)
    except (ValueError, ConfigError) as exc:
        _fail(EXIT_CONFIG, f"config error: {exc}")
    if len(plan.eps_ladder) < 3:
        _fail(EXIT_CONFIG, f"config error: eps_ladder needs at least 3 values for a rate fit, got {len(plan.eps_ladder)}")
    family = {}
    for eps in plan.eps_ladder if plan.workers <= 1 else ():
        try:
            family[eps] = H.run_single(plan, eps)
        except OberbeckError as exc:
            _fail(EXIT_RUNTIME, f"runtime failure at eps={eps:g}: {exc}")
    if plan.workers > 1:
        try:
            family = H.run_epsilon_family(plan)
        except OberbeckError as exc:
            _fail(EXIT_RUNTIME, f"runtime failure: {exc}")
    rep = H.build_report(plan, family)
    H.emit_report(rep, fmt, outdir / f"report.{fmt}")
    if fmt != "json":
        H.emit_report(rep, "json", outdir / "report.json")
    H.emit_svg(rep, outdir / "convergence.svg")
    for f in rep.fits:
        click.echo(_fit_line(f))
    raise SystemExit(EXIT_OK if rep.passed else EXIT_VERIFY)


def _fit_line(f: dict) -> str:
    slope = "n/a" if f.get("slope") is None else f"{f['slope']:.3f}"
    tag = {True: "PASS", False: "FAIL", None: "info"}[f.get("passed")]
    return f"{tag} {f['measurement']} p={f['p']:g} s={f['s']:g} slope={slope} expected={f['expected_slope']:.3f}"


@main.command("report", epilog=help_text())
@click.argument("path", type=click.Path(exists=True, dir_okay=False))
@click.option("--format", "fmt", type=click.Choice(["csv", "json"]), default=None, help="re-emit in this format")
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="destination for the re-emitted report")
def report(path, fmt, out):
    """Summarize (and optionally convert) an existing report."""
    try:
        rep = H.read_report(path)
    except OberbeckError as exc:
        _fail(EXIT_RUNTIME, f"cannot read report: {exc}")
    if not rep.fits:
        # CSV reports carry only records; refit from them
        groups = {}
        for r in rep.records:
            groups.setdefault((r["norm_id"], r["p"], r["s"]), []).append(r)
        for (nid, p, s), rows in sorted(groups.items()):
            rows.sort(key=lambda r: -r["eps"])
            try:
                fit = H.fit_rate_robust([r["eps"] for r in rows], [r["value"] for r in rows])
                slope = fit.slope
            except DegenerateFit:
                slope = None
            rep.fits.append(
                {"measurement": nid.split("=")[0], "p": p, "s": s, "slope": slope, "expected_slope": rows[0]["expected_slope"], "passed": None}
            )
    for f in rep.fits:
        click.echo(_fit_line(f))
    if fmt and out:
        H.emit_report(rep, fmt, out)
    raise SystemExit(EXIT_OK if rep.passed else EXIT_VERIFY)


if __name__ == "__main__":  # pragma: no cover
    main()
