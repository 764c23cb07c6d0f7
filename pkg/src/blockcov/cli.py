"""Command-line entry point: ``blockcov {estimate,simulate,experiment,metrics}``."""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from . import baselines as bl
from .dgp import KINDS, ScenarioSpec, build_sigma, sample_data
from .experiment import METRIC_COLUMNS, Cell, ExperimentConfig, run_experiment
from .inference import HyperpriorSpec, Hyperparams
from .io import (
    ConfigError,
    DataError,
    read_json,
    read_labels_csv,
    read_matrix_csv,
    write_json,
    write_matrix_csv,
    write_rows_csv,
)
from .partitions import Partition, ari, r2_loss
from .randgen import RandomStream
from .sampler import ChainConfig, NumericalFailure, estimate, run_chain

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

_CHAIN_FLAGS = {
    "iterations": int, "burnin": int, "thin": int, "sams_repeats": int,
    "prior": str, "r0": float, "rho": float, "seed": int,
}


def _add_chain_flags(ap: argparse.ArgumentParser) -> None:
    g = ap.add_argument_group("chain")
    for name, typ in _CHAIN_FLAGS.items():
        g.add_argument("--" + name.replace("_", "-"), dest=name, type=typ, default=None)


def chain_config(raw: dict | None, args=None) -> ChainConfig:
    """ChainConfig from a config-file mapping, with command-line flags taking precedence."""
    raw = dict(raw or {})
    if args is not None:
        for name in _CHAIN_FLAGS:
            val = getattr(args, name, None)
            if val is not None:
                raw[name] = val
    known = {f.name for f in dataclasses.fields(ChainConfig)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"unknown chain settings: {unknown}")
    if isinstance(raw.get("theta0"), dict):
        raw["theta0"] = Hyperparams(**raw["theta0"])
    if isinstance(raw.get("hyperprior"), dict):
        raw["hyperprior"] = HyperpriorSpec(**{k: tuple(v) if isinstance(v, list) else v
                                              for k, v in raw["hyperprior"].items()})
    try:
        return ChainConfig(**raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid chain configuration: {exc}") from None


def scenario_spec(raw: dict) -> ScenarioSpec:
    try:
        return ScenarioSpec(**raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid scenario: {exc}") from None


def _load_config(path) -> dict:
    if path is None:
        return {}
    cfg = read_json(path)
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return cfg


def _standardize(Y: np.ndarray) -> np.ndarray:
    sd = Y.std(axis=0)
    if np.any(sd == 0):
        raise DataError(f"cannot standardise constant columns {np.flatnonzero(sd == 0).tolist()}")
    return (Y - Y.mean(axis=0)) / sd


def cmd_estimate(args) -> int:
    cfg = _load_config(args.config)
    chain = chain_config(cfg.get("chain"), args)
    standardize = args.standardize or bool(cfg.get("standardize", False))
    max_p = args.max_p if args.max_p is not None else int(cfg.get("max_p", 200))
    Y, header = read_matrix_csv(args.data)
    n, p = Y.shape
    if p > max_p:
        warnings.warn(f"p = {p} exceeds the recommended limit of {max_p}; the sampler may be slow")
        print(f"warning: p = {p} exceeds the recommended limit of {max_p}", file=sys.stderr)
    if standardize:
        Y = _standardize(Y)
    out = run_chain(Y, chain)
    sigma, point, psm, diag = estimate(out)
    d = Path(args.out)
    d.mkdir(parents=True, exist_ok=True)
    write_matrix_csv(d / "sigma_hat.csv", sigma)
    write_matrix_csv(d / "psm.csv", psm)
    write_matrix_csv(d / "partition_map.csv", [point.labels])
    write_matrix_csv(d / "partition_trace.csv", [b.labels for b in out.partition_trace])
    write_rows_csv(d / "k_trace.csv", ["iteration", "k"],
                   [[t + 1, int(k)] for t, k in enumerate(out.k_trace)])
    write_rows_csv(d / "theta_trace.csv", ["iteration", "nu0", "s0", "delta1", "delta2", "delta3"],
                   [[t + 1, *row] for t, row in enumerate(out.theta_trace)])
    write_json(d / "summary.json", {
        "command": "estimate",
        "version": __version__,
        "seed": chain.seed,
        "config": chain.echo(),
        "data": {"path": str(Path(args.data)), "n": n, "p": p, "header": header,
                 "standardized": standardize},
        "acceptance": out.acceptance,
        "final_log_marginal": diag["final_log_marginal"],
        "point_partition_k": point.k,
        "point_log_posterior": diag["point_log_posterior"],
        "retained": diag["retained"],
        "am_degenerate": diag["am_degenerate"],
    })
    return EXIT_OK


_SCENARIO_FLAGS = {"p": int, "n": int, "rho": float, "H": float, "alpha": float,
                   "kstar": int, "tau": float}


def cmd_simulate(args) -> int:
    cfg = _load_config(args.config)
    raw = dict(cfg.get("scenario", {}))
    if args.kind is not None:
        raw["kind"] = args.kind
    for name in _SCENARIO_FLAGS:
        val = getattr(args, "sc_" + name)
        if val is not None:
            raw[name] = val
    if args.deltas is not None:
        raw["deltas"] = args.deltas
    if "kind" not in raw:
        raise ConfigError("simulate needs a scenario kind (--kind or scenario.kind)")
    spec = scenario_spec(raw)
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    root = RandomStream(seed, ("simulate",))
    scen = build_sigma(spec, root.child("sigma"))
    Y = sample_data(scen.sigma, spec.n, root.child("data"))
    d = Path(args.out)
    d.mkdir(parents=True, exist_ok=True)
    write_matrix_csv(d / "data.csv", Y)
    write_matrix_csv(d / "sigma_true.csv", scen.sigma)
    if scen.truth is not None:
        write_matrix_csv(d / "labels_true.csv", [scen.truth.labels])
    meta = {"command": "simulate", "version": __version__, "seed": seed,
            "scenario": spec.echo(), "has_truth": scen.truth is not None}
    write_json(d / "meta.json", meta)
    write_json(d / "summary.json", meta)
    return EXIT_OK


def experiment_config(cfg: dict, args) -> ExperimentConfig:
    cells_raw = cfg.get("cells")
    if not cells_raw:
        raise ConfigError("experiment config needs a non-empty 'cells' list")
    cells = []
    for i, c in enumerate(cells_raw):
        if "scenario" not in c:
            raise ConfigError(f"cell {i} has no scenario")
        spec = scenario_spec(c["scenario"])
        cells.append(Cell(str(c.get("name", f"{spec.kind}_{i}")), spec, bool(c.get("redraw_sigma", False))))
    try:
        return ExperimentConfig(
            cells=tuple(cells),
            estimators=tuple(cfg.get("estimators", ("sample", "bcm_hier"))),
            replicates=int(args.replicates if args.replicates is not None else cfg.get("replicates", 10)),
            seed=int(args.seed if args.seed is not None else cfg.get("seed", 0)),
            chain=chain_config(cfg.get("chain")),
            cv_folds=int(cfg.get("cv_folds", 5)),
            workers=int(args.workers if args.workers is not None else cfg.get("workers", 1)),
            timing=not args.no_timing,
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid experiment configuration: {exc}") from None


def cmd_experiment(args) -> int:
    cfg = _load_config(args.config)
    exp = experiment_config(cfg, args)
    rows = run_experiment(exp)
    d = Path(args.out)
    d.mkdir(parents=True, exist_ok=True)
    write_rows_csv(d / "metrics.csv", METRIC_COLUMNS, rows)
    write_json(d / "summary.json", {
        "command": "experiment",
        "version": __version__,
        "seed": exp.seed,
        "replicates": exp.replicates,
        "estimators": list(exp.estimators),
        "cells": [{"name": c.name, "scenario": c.scenario.echo(), "redraw_sigma": c.redraw_sigma}
                  for c in exp.cells],
        "chain": exp.chain.echo(),
        "rows": len(rows),
        "failed_rows": sum(1 for r in rows if r[-1]),
    })
    return EXIT_OK


def cmd_metrics(args) -> int:
    est, truth = Path(args.estimate), Path(args.truth)
    sigma_hat, _ = read_matrix_csv(est / "sigma_hat.csv")
    report: dict = {"notices": []}
    sigma_path = truth / "sigma_true.csv"
    if sigma_path.exists():
        sigma_true, _ = read_matrix_csv(sigma_path)
        if sigma_true.shape != sigma_hat.shape:
            raise DataError(f"sigma_true {sigma_true.shape} and sigma_hat {sigma_hat.shape} differ")
        data_path = Path(args.data) if args.data else truth / "data.csv"
        if data_path.exists():
            Y, _ = read_matrix_csv(data_path)
            S = bl.sample_cov(Y)
            report["frobenius_ratio"] = bl.frobenius_ratio(sigma_hat, S, sigma_true)
        else:
            report["notices"].append(f"{data_path} missing: frobenius_ratio skipped")
        report["frobenius"] = float(np.linalg.norm(sigma_hat - sigma_true))
    else:
        report["notices"].append(f"{sigma_path} missing: covariance metrics skipped")
    labels_path = truth / "labels_true.csv"
    if labels_path.exists():
        true_part = Partition(tuple(read_labels_csv(labels_path)))
        map_path = est / "partition_map.csv"
        if map_path.exists():
            report["ari"] = ari(Partition(tuple(read_labels_csv(map_path))), true_part)
        else:
            report["notices"].append(f"{map_path} missing: ari skipped")
        psm_path = est / "psm.csv"
        if psm_path.exists():
            psm, _ = read_matrix_csv(psm_path)
            report["r2"] = r2_loss(psm, true_part)
        else:
            report["notices"].append(f"{psm_path} missing: r2 skipped")
    else:
        report["notices"].append(f"{labels_path} missing: ari and r2 skipped")
    for note in report["notices"]:
        print(f"notice: {note}", file=sys.stderr)
    if args.out:
        write_json(args.out, report)
    print(json.dumps(report, indent=2, sort_keys=True))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="blockcov", description=__doc__)
    ap.add_argument("--version", action="version", version=f"blockcov {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    e = sub.add_parser("estimate", help="run the sampler on a data CSV")
    e.add_argument("data")
    e.add_argument("--out", required=True)
    e.add_argument("--config")
    e.add_argument("--standardize", action="store_true")
    e.add_argument("--max-p", dest="max_p", type=int, default=None)
    _add_chain_flags(e)
    e.set_defaults(func=cmd_estimate)

    s = sub.add_parser("simulate", help="draw a scenario covariance and data")
    s.add_argument("--kind", choices=KINDS)
    s.add_argument("--out", required=True)
    s.add_argument("--config")
    s.add_argument("--seed", type=int)
    for name, typ in _SCENARIO_FLAGS.items():
        s.add_argument("--" + name, dest="sc_" + name, type=typ, default=None)
    s.add_argument("--deltas", type=float, nargs=3)
    s.set_defaults(func=cmd_simulate)

    x = sub.add_parser("experiment", help="run a scenario x estimator x replicate grid")
    x.add_argument("--config", required=True)
    x.add_argument("--out", required=True)
    x.add_argument("--seed", type=int)
    x.add_argument("--replicates", type=int)
    x.add_argument("--workers", type=int)
    x.add_argument("--no-timing", action="store_true",
                   help="write runtime_ms as 0 so reruns are byte-identical")
    x.set_defaults(func=cmd_experiment)

    m = sub.add_parser("metrics", help="score an estimate directory against a truth directory")
    m.add_argument("--estimate", required=True)
    m.add_argument("--truth", required=True)
    m.add_argument("--data")
    m.add_argument("--out")
    m.set_defaults(func=cmd_metrics)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalFailure, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
