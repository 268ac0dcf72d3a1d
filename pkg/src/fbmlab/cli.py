"""Single batch-mode entry point dispatching every experiment from a config."""

from __future__ import annotations

import argparse
import os
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import fbm, flowlab, fraccalc, girsanov, kernel, localtime, sde, shuffle
from .config import (
    ConfigError,
    Field,
    apply_overrides,
    count_field,
    hurst_field,
    load_config,
    positive_field,
    validate_config,
)
from .core import SeedSpec
from .report import ExperimentReport

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_CONFIG = 2


def _levels_field() -> Field:
    return Field(
        list,
        lambda v: all(isinstance(x, int) and x > 0 for x in v) and len(v) >= 1,
        "list of positive integers",
    )


def _hurst_list_field() -> Field:
    return Field(
        list,
        lambda v: all(isinstance(x, (int, float)) and 0 < x < 0.5 for x in v),
        "list of Hurst values in (0, 1/2)",
    )


def _float_list_field(check=lambda x: True) -> Field:
    return Field(
        list,
        lambda v: all(isinstance(x, (int, float)) and check(x) for x in v),
        "list of numbers",
    )


# --- per-subcommand schema + runner ----------------------------------------


def _run_fraccalc_table(cfg, seed, workers, outdir):
    return fraccalc.power_table_report(
        grid_steps=cfg["grid_steps"],
        horizon=cfg["horizon"],
        alphas=cfg["alphas"],
        betas=cfg["betas"],
        probe_fracs=cfg["probe_fracs"],
        strict_from=cfg["strict_from"],
        tolerance=cfg["tolerance"],
    )


def _run_kernel_verify(cfg, seed, workers, outdir):
    return kernel.factorization_report(
        hursts=cfg["hursts"],
        refinements=cfg["refinements"],
        grid_points=cfg["grid_points"],
        horizon=cfg["horizon"],
        tolerance=cfg["tolerance"],
    )


def _run_fbm_sample(cfg, seed, workers, outdir):
    grid = fbm.TimeGrid(cfg["horizon"], cfg["steps"])
    sampler = fbm.sample_volterra if cfg["method"] == "volterra" else fbm.sample_exact
    ens = sampler(grid, cfg["hurst"], cfg["dim"], cfg["n_paths"], seed, label=("cli",))
    rep = ExperimentReport("fbm-sample", dict(cfg, seed=seed.master))
    rep.add("n_paths", float(ens.n_paths))
    rep.add("terminal_mean", float(np.mean(ens.paths[:, -1, :])) if ens.n_paths else 0.0)
    fbm.write_paths(Path(outdir) / "paths.bin", ens, seed.master)
    return rep


def _run_fbm_verify(cfg, seed, workers, outdir):
    return fbm.sampler_equivalence_report(
        hursts=cfg["hursts"],
        steps=cfg["steps"],
        horizon=cfg["horizon"],
        dim=cfg["dim"],
        n_paths=cfg["n_paths"],
        seed=seed,
        systematic=cfg["systematic"],
    )


def _run_shuffle_verify(cfg, seed, workers, outdir):
    return shuffle.verification_report(n_random=cfg["n_random"], seed=seed.master)


def _run_ibp_check(cfg, seed, workers, outdir):
    return localtime.ibp_report(
        hursts=cfg["hursts"],
        orders=cfg["orders"],
        steps=cfg["steps"],
        horizon=cfg["horizon"],
        theta=cfg["theta"],
        t=cfg["t"],
        n_paths=cfg["n_paths"],
        radius=cfg["radius"],
        sigma=cfg["sigma"],
        seed=seed,
    )


def _run_psi_table(cfg, seed, workers, outdir):
    return localtime.psi_report(
        hursts=cfg["hursts"], ks=cfg["ks"], theta=cfg["theta"], t=cfg["t"], seed=seed
    )


def _run_appendix_verify(cfg, seed, workers, outdir):
    return localtime.appendix_report(
        hurst=cfg["hurst"],
        m=cfg["m"],
        n_draws=cfg["n_draws"],
        seed=seed,
        a2_params={
            "hurst": cfg["a2_hurst"],
            "gamma": cfg["a2_gamma"],
            "t": cfg["horizon"],
            "cells": cfg["a2_cells"],
        },
    )


def _run_girsanov_verify(cfg, seed, workers, outdir):
    drifts = [b for b in sde.bounded_catalog(1) if b.name in cfg["drifts"]]
    missing = set(cfg["drifts"]) - {b.name for b in drifts}
    if missing:
        raise ConfigError(f"unknown drifts {sorted(missing)}")
    return girsanov.normalization_report(
        drifts,
        hursts=cfg["hursts"],
        steps=cfg["steps"],
        horizon=cfg["horizon"],
        n_paths=cfg["n_paths"],
        seed=seed,
        x0=cfg["x0"],
    )


def _run_sde_solve(cfg, seed, workers, outdir):
    known = {b.name for b in sde.bounded_catalog(1)}
    if cfg["drift"] not in known:
        raise ConfigError(f"unknown drift {cfg['drift']!r}; choose from {sorted(known)}")
    rep, path = sde.solve_report(
        drift_name=cfg["drift"],
        hurst=cfg["hurst"],
        steps=cfg["steps"],
        horizon=cfg["horizon"],
        x0=cfg["x0"],
        seed=seed,
    )
    data = np.column_stack([path.grid.nodes, path.values])
    header = "t," + ",".join(f"x{i}" for i in range(path.values.shape[1]))
    np.savetxt(Path(outdir) / "path.csv", data, delimiter=",", header=header, comments="")
    return rep


def _run_sde_converge(cfg, seed, workers, outdir):
    return sde.convergence_report(
        drift_name=cfg["drift"],
        levels=cfg["levels"],
        hurst=cfg["hurst"],
        steps=cfg["steps"],
        horizon=cfg["horizon"],
        t=cfg["t"],
        n_paths=cfg["n_paths"],
        seed=seed,
        x0=cfg["x0"],
        assert_trend=cfg["assert_trend"],
    )


def _run_flow_derivatives(cfg, seed, workers, outdir):
    return flowlab.flow_derivatives_report(
        hurst=cfg["hurst"],
        steps=cfg["steps"],
        horizon=cfg["horizon"],
        n_paths=cfg["n_paths"],
        fd_step=cfg["fd_step"],
        seed=seed,
    )


def _run_compactness_stat(cfg, seed, workers, outdir):
    catalog = {b.name: b for b in sde.bounded_catalog(1)}
    if cfg["drift"] not in catalog:
        raise ConfigError(f"unknown drift {cfg['drift']!r}")
    return flowlab.compactness_report(
        catalog[cfg["drift"]],
        levels=cfg["levels"],
        hurst=cfg["hurst"],
        steps=cfg["steps"],
        horizon=cfg["horizon"],
        t=cfg["t"],
        beta=cfg["beta"],
        n_paths=cfg["n_paths"],
        seed=seed,
    )


def _run_flow_scan(cfg, seed, workers, outdir):
    catalog = {b.name: b for b in sde.bounded_catalog(cfg["dim"])}
    if cfg["drift"] not in catalog:
        raise ConfigError(f"unknown drift {cfg['drift']!r}")
    return flowlab.moment_scan_report(
        catalog[cfg["drift"]],
        k=cfg["k"],
        p=cfg["p"],
        h_grid=cfg["h_grid"],
        levels=cfg["levels"],
        steps=cfg["steps"],
        horizon=cfg["horizon"],
        t=cfg["t"],
        n_paths=cfg["n_paths"],
        seed=seed,
    )


COMMANDS = {
    "fraccalc-table": (
        _run_fraccalc_table,
        {
            "grid_steps": count_field(),
            "horizon": positive_field(),
            "alphas": _float_list_field(lambda x: 0 < x <= 1),
            "betas": _float_list_field(lambda x: x >= 0),
            "probe_fracs": _float_list_field(lambda x: 0 < x <= 1),
            "strict_from": positive_field(),
            "tolerance": positive_field(),
        },
    ),
    "kernel-verify": (
        _run_kernel_verify,
        {
            "hursts": _hurst_list_field(),
            "refinements": _levels_field(),
            "grid_points": count_field(2),
            "horizon": positive_field(),
            "tolerance": positive_field(),
        },
    ),
    "fbm-sample": (
        _run_fbm_sample,
        {
            "hurst": hurst_field(),
            "steps": count_field(),
            "horizon": positive_field(),
            "dim": count_field(),
            "n_paths": count_field(0),
            "method": Field(str, lambda v: v in ("exact", "volterra"), "exact|volterra"),
        },
    ),
    "fbm-verify": (
        _run_fbm_verify,
        {
            "hursts": _hurst_list_field(),
            "steps": count_field(),
            "horizon": positive_field(),
            "dim": count_field(),
            "n_paths": count_field(),
            "systematic": positive_field(),
        },
    ),
    "shuffle-verify": (_run_shuffle_verify, {"n_random": count_field()}),
    "ibp-check": (
        _run_ibp_check,
        {
            "hursts": _hurst_list_field(),
            "orders": Field(list, lambda v: all(o in (0, 1, 2) for o in v), "orders 0..2"),
            "steps": count_field(),
            "horizon": positive_field(),
            "theta": Field((int, float), lambda v: v >= 0, ">= 0"),
            "t": positive_field(),
            "n_paths": count_field(),
            "radius": positive_field(),
            "sigma": positive_field(),
        },
    ),
    "psi-table": (
        _run_psi_table,
        {
            "hursts": _hurst_list_field(),
            "ks": Field(list, lambda v: all(isinstance(k, int) and k >= 0 for k in v), "ints"),
            "theta": Field((int, float), lambda v: v >= 0, ">= 0"),
            "t": positive_field(),
        },
    ),
    "appendix-verify": (
        _run_appendix_verify,
        {
            "hurst": hurst_field(),
            "m": count_field(),
            "n_draws": count_field(),
            "horizon": positive_field(),
            "a2_hurst": hurst_field(),
            "a2_gamma": Field((int, float), lambda v: 1 < v < 2, "(1, 2)"),
            "a2_cells": _levels_field(),
        },
    ),
    "girsanov-verify": (
        _run_girsanov_verify,
        {
            "drifts": Field(list, lambda v: all(isinstance(s, str) for s in v), "names"),
            "hursts": _hurst_list_field(),
            "steps": count_field(),
            "horizon": positive_field(),
            "n_paths": count_field(),
            "x0": Field((int, float)),
        },
    ),
    "sde-solve": (
        _run_sde_solve,
        {
            "drift": Field(str),
            "hurst": hurst_field(),
            "steps": count_field(),
            "horizon": positive_field(),
            "x0": Field((int, float)),
        },
    ),
    "sde-converge": (
        _run_sde_converge,
        {
            "drift": Field(str),
            "levels": _levels_field(),
            "hurst": hurst_field(),
            "steps": count_field(),
            "horizon": positive_field(),
            "t": positive_field(),
            "n_paths": count_field(),
            "x0": Field((int, float)),
            "assert_trend": Field(bool),
        },
    ),
    "flow-derivatives": (
        _run_flow_derivatives,
        {
            "hurst": hurst_field(),
            "steps": count_field(),
            "horizon": positive_field(),
            "n_paths": count_field(),
            "fd_step": positive_field(),
        },
    ),
    "compactness-stat": (
        _run_compactness_stat,
        {
            "drift": Field(str),
            "levels": _levels_field(),
            "hurst": hurst_field(),
            "steps": count_field(),
            "horizon": positive_field(),
            "t": positive_field(),
            "beta": Field((int, float), lambda v: 0 < v < 0.5, "(0, 1/2)"),
            "n_paths": count_field(),
        },
    ),
    "flow-scan": (
        _run_flow_scan,
        {
            "drift": Field(str),
            "dim": count_field(),
            "k": Field(int, lambda v: 1 <= v <= 3, "1..3"),
            "p": Field(int, lambda v: v >= 2 and v % 2 == 0, "even >= 2"),
            "h_grid": _hurst_list_field(),
            "levels": _levels_field(),
            "steps": count_field(),
            "horizon": positive_field(),
            "t": positive_field(),
            "n_paths": count_field(),
        },
    ),
}


def default_config_path(command: str):
    return resources.files("fbmlab").joinpath(f"configs/{command}.yaml")


def load_command_config(command: str, config_path: str | None, overrides) -> dict:
    if config_path is None:
        with resources.as_file(default_config_path(command)) as p:
            cfg = load_config(p)
    else:
        cfg = load_config(config_path)
    cfg = apply_overrides(cfg, overrides or [])
    seed = cfg.pop("seed", 0)
    if not isinstance(seed, int):
        raise ConfigError("seed must be an integer")
    runner, schema = COMMANDS[command]
    validate_config(cfg, schema, name=command)
    cfg["_seed"] = seed
    return cfg


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fbmlab",
        description="Numerical experiments for fBm-driven SDEs with singular drift",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", default=None, help="YAML config path (default: shipped)")
        p.add_argument("--out", default=None, help="output directory (default: ./out/<command>)")
        p.add_argument("--seed", type=int, default=None, help="master seed override")
        p.add_argument(
            "--workers",
            type=int,
            default=os.cpu_count() or 1,
            help="worker-count knob for parallel sections",
        )
        p.add_argument(
            "--override",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="config override, repeatable; dotted keys reach nested sections",
        )
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_command_config(args.command, args.config, args.override)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    seed = SeedSpec(args.seed if args.seed is not None else cfg.pop("_seed"))
    cfg.pop("_seed", None)
    outdir = Path(args.out) if args.out else Path("out") / args.command
    outdir.mkdir(parents=True, exist_ok=True)
    runner, _ = COMMANDS[args.command]
    try:
        report = runner(cfg, seed, args.workers, outdir)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FloatingPointError, np.linalg.LinAlgError, ValueError) as exc:
        print(f"runtime numeric failure: {exc}", file=sys.stderr)
        return EXIT_FAILED
    report.write(outdir)
    for stat in report.stats:
        if stat.passed is not None:
            print(f"{'PASS' if stat.passed else 'FAIL'} {stat.name}", file=sys.stderr)
    print(f"report written to {outdir}", file=sys.stderr)
    return EXIT_OK if report.all_passed else EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
