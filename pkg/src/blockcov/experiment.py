"""Replicated benchmark runs: scenarios x estimators x replicates -> metrics rows."""

from __future__ import annotations

import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import baselines as bl
from .dgp import Scenario, ScenarioSpec, build_sigma, sample_data
from .partitions import Partition, ari, r2_loss
from .randgen import RandomStream
from .sampler import ChainConfig, NumericalFailure, estimate, run_chain

__all__ = [
    "ESTIMATORS",
    "BAYES",
    "Cell",
    "ExperimentConfig",
    "EstimateResult",
    "run_estimator",
    "run_replicate",
    "run_experiment",
    "METRIC_COLUMNS",
    "worker_count",
]

BAYES = {"bcm_hier": "hierarchical", "bcm_weak": "weak", "bcm_ck": "ck", "bcm_g": "g"}
ORACLES = ("stein_plugin", "fsopt", "known_blocks")
ESTIMATORS = ("sample", "banding", "tapering", "threshold", "lw_linear") + ORACLES + tuple(BAYES)
METRIC_COLUMNS = (
    "scenario", "replicate", "estimator", "frobenius_ratio", "ari", "r2",
    "runtime_ms", "seed", "frobenius", "error",
)


def worker_count(requested: int | None = None) -> int:
    env = os.environ.get("BLOCKCOV_WORKERS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    if requested:
        return max(1, int(requested))
    return 1


@dataclass(frozen=True)
class Cell:
    name: str
    scenario: ScenarioSpec
    redraw_sigma: bool = False


@dataclass(frozen=True)
class ExperimentConfig:
    cells: tuple[Cell, ...]
    estimators: tuple[str, ...] = ("sample", "bcm_hier")
    replicates: int = 10
    seed: int = 0
    chain: ChainConfig = field(default_factory=ChainConfig)
    cv_folds: int = 5
    workers: int = 1
    timing: bool = True

    def __post_init__(self) -> None:
        unknown = [e for e in self.estimators if e not in ESTIMATORS]
        if unknown:
            raise ValueError(f"unknown estimators {unknown}; choose from {ESTIMATORS}")
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        if not self.cells:
            raise ValueError("the experiment grid has no cells")


@dataclass
class EstimateResult:
    sigma: np.ndarray | None
    partition: Partition | None = None
    psm: np.ndarray | None = None
    runtime_ms: float = 0.0
    error: str = ""


def _seed_int(stream: RandomStream) -> int:
    return int(stream.generator.integers(0, 2**63 - 1))


def run_estimator(name: str, Y, sigma_true=None, truth: Partition | None = None,
                  chain: ChainConfig | None = None, seed: int = 0, cv_folds: int = 5) -> EstimateResult:
    t0 = time.perf_counter()
    part = psm = None
    S = bl.sample_cov(Y)
    if name == "sample":
        sigma = S
    elif name in bl.TUNED:
        grid = bl.default_grid(name, S)
        val = bl.cv_tune(name, Y, grid, cv_folds, RandomStream(seed, ("cv",)))
        sigma = bl.TUNED[name](S, val)
    elif name == "lw_linear":
        sigma = bl.lw_linear(Y)
    elif name == "stein_plugin":
        sigma = bl.stein_plugin_oracle(S, sigma_true)
    elif name == "fsopt":
        sigma = bl.fsopt_oracle(S, sigma_true)
    elif name == "known_blocks":
        if truth is None:
            raise ValueError("known_blocks needs a truth partition")
        sigma, part = bl.known_blocks_mle(S, truth), truth
    elif name in BAYES:
        cfg = replace(chain or ChainConfig(), prior=BAYES[name], seed=seed)
        sigma, part, psm, _ = estimate(run_chain(Y, cfg))
    else:
        raise ValueError(f"unknown estimator {name!r}")
    return EstimateResult(sigma, part, psm, (time.perf_counter() - t0) * 1e3)


def _replicate_inputs(cfg: ExperimentConfig, ci: int, rep: int, fixed: Scenario | None):
    cell = cfg.cells[ci]
    root = RandomStream(cfg.seed, (ci,))
    if fixed is None:
        scen = build_sigma(cell.scenario, root.child(rep, "sigma"))
    else:
        scen = fixed
    Y = sample_data(scen.sigma, cell.scenario.n, root.child(rep, "data"))
    chain_seed = _seed_int(root.child(rep, "chain"))
    return scen, Y, chain_seed


def run_replicate(args) -> list[list]:
    cfg, ci, rep, fixed = args
    cell = cfg.cells[ci]
    scen, Y, chain_seed = _replicate_inputs(cfg, ci, rep, fixed)
    S = bl.sample_cov(Y)
    rows = []
    for name in cfg.estimators:
        row = {"scenario": cell.name, "replicate": rep, "estimator": name, "seed": chain_seed,
               "frobenius_ratio": None, "ari": None, "r2": None, "runtime_ms": None,
               "frobenius": None, "error": ""}
        try:
            res = run_estimator(name, Y, scen.sigma, scen.truth, cfg.chain, chain_seed, cfg.cv_folds)
            row["frobenius"] = float(np.linalg.norm(res.sigma - scen.sigma))
            row["frobenius_ratio"] = bl.frobenius_ratio(res.sigma, S, scen.sigma)
            if scen.truth is not None and res.partition is not None:
                row["ari"] = ari(res.partition, scen.truth)
            if scen.truth is not None and res.psm is not None:
                row["r2"] = r2_loss(res.psm, scen.truth)
            row["runtime_ms"] = round(res.runtime_ms, 3) if cfg.timing else 0
        except (ValueError, NumericalFailure, FloatingPointError, np.linalg.LinAlgError) as exc:
            row["error"] = f"{type(exc).__name__}: {exc}"
        rows.append([row[c] for c in METRIC_COLUMNS])
    return rows


def run_experiment(cfg: ExperimentConfig) -> list[list]:
    """All (cell, replicate, estimator) rows in grid order, independent of worker count."""
    tasks = []
    for ci, cell in enumerate(cfg.cells):
        fixed = None if cell.redraw_sigma else build_sigma(cell.scenario, RandomStream(cfg.seed, (ci, "sigma")))
        for rep in range(cfg.replicates):
            tasks.append((cfg, ci, rep, fixed))
    workers = min(worker_count(cfg.workers), len(tasks))
    if workers <= 1:
        chunks = [run_replicate(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(run_replicate, tasks))
    return [row for chunk in chunks for row in chunk]
