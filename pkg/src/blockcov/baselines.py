"""Competing covariance estimators, oracle estimators and evaluation metrics."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .blockmodel import block_average
from .partitions import Partition
from .randgen import as_generator

__all__ = [
    "EstimatorSpec",
    "sample_cov",
    "banding",
    "tapering",
    "hard_threshold",
    "lw_linear",
    "lw_intensity",
    "stein_plugin_oracle",
    "fsopt_oracle",
    "known_blocks_mle",
    "frobenius_ratio",
    "is_pd",
    "cv_tune",
    "default_grid",
    "TUNED",
]


def sample_cov(Y, center: bool = False) -> np.ndarray:
    """S = Y'Y / n (uncentered unless ``center``)."""
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    if Y.shape[0] < 1:
        raise ValueError("need at least one observation")
    if center:
        Y = Y - Y.mean(axis=0)
    S = Y.T @ Y / Y.shape[0]
    return 0.5 * (S + S.T)


def _lag(p: int) -> np.ndarray:
    idx = np.arange(p)
    return np.abs(idx[:, None] - idx[None, :])


def banding(S, bandwidth: float) -> np.ndarray:
    if bandwidth < 0:
        raise ValueError("bandwidth must be >= 0")
    S = np.asarray(S, dtype=float)
    return np.where(_lag(S.shape[0]) <= bandwidth, S, 0.0)


def tapering(S, bandwidth: float) -> np.ndarray:
    """Trapezoid weights: 1 up to lag b/2, linear down to 0 at lag b."""
    if bandwidth < 0:
        raise ValueError("bandwidth must be >= 0")
    S = np.asarray(S, dtype=float)
    lag = _lag(S.shape[0]).astype(float)
    if bandwidth == 0:
        return np.where(lag == 0, S, 0.0)
    half = bandwidth / 2.0
    w = np.clip((bandwidth - lag) / half, 0.0, 1.0)
    return S * w


def hard_threshold(S, t: float) -> np.ndarray:
    if t < 0:
        raise ValueError("threshold must be >= 0")
    S = np.asarray(S, dtype=float)
    out = np.where(np.abs(S) >= t, S, 0.0)
    np.fill_diagonal(out, np.diag(S))
    return out


def lw_intensity(Y) -> tuple[float, float]:
    """(shrinkage intensity in [0, 1], target scale mu) for the linear Ledoit-Wolf rule."""
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    n, p = Y.shape
    if n < 2:
        raise ValueError("Ledoit-Wolf needs n >= 2")
    S = Y.T @ Y / n
    mu = np.trace(S) / p
    delta2 = np.sum((S - mu * np.eye(p)) ** 2) / p
    if delta2 == 0.0:
        return 0.0, mu
    # average squared deviation of the rank-one terms y y' from S
    row_sq = np.sum(Y**2, axis=1)
    beta_bar2 = (np.sum(row_sq**2) / n - np.sum(S**2)) / (n * p)
    beta2 = min(max(beta_bar2, 0.0), delta2)
    return beta2 / delta2, mu


def lw_linear(Y) -> np.ndarray:
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    shrink, mu = lw_intensity(Y)
    S = Y.T @ Y / Y.shape[0]
    return shrink * mu * np.eye(S.shape[0]) + (1.0 - shrink) * S


def _eig_desc(S):
    w, U = np.linalg.eigh(S)
    order = np.argsort(w)[::-1]
    return w[order], U[:, order]


def stein_plugin_oracle(S, sigma_true) -> np.ndarray:
    """Sample eigenvectors with the sorted population eigenvalues plugged in."""
    _, U = _eig_desc(np.asarray(S, dtype=float))
    lam = np.sort(np.linalg.eigvalsh(np.asarray(sigma_true, dtype=float)))[::-1]
    out = (U * lam) @ U.T
    return 0.5 * (out + out.T)


def fsopt_oracle(S, sigma_true) -> np.ndarray:
    """Sample eigenvectors with delta_j = u_j' Sigma u_j (Frobenius-optimal given U)."""
    _, U = _eig_desc(np.asarray(S, dtype=float))
    delta = np.einsum("ij,ik,kj->j", U, np.asarray(sigma_true, dtype=float), U)
    out = (U * delta) @ U.T
    return 0.5 * (out + out.T)


def known_blocks_mle(S, truth: Partition) -> np.ndarray:
    return block_average(S, truth)


def frobenius_ratio(sigma_hat, S, sigma_true) -> float:
    """||Sigma_hat - Sigma|| / ||S - Sigma||; inf (with a warning) when S equals Sigma."""
    den = np.linalg.norm(np.asarray(S) - np.asarray(sigma_true))
    num = np.linalg.norm(np.asarray(sigma_hat) - np.asarray(sigma_true))
    if den == 0.0:
        warnings.warn("sample covariance equals the truth; Frobenius ratio undefined",
                      RuntimeWarning, stacklevel=2)
        return 0.0 if num == 0.0 else math.inf
    return float(num / den)


def is_pd(M, tol: float = 0.0) -> bool:
    return bool(np.linalg.eigvalsh(0.5 * (M + M.T)).min() > tol)


TUNED: dict[str, Callable[[np.ndarray, float], np.ndarray]] = {
    "banding": banding,
    "tapering": tapering,
    "threshold": hard_threshold,
}


def default_grid(kind: str, S) -> np.ndarray:
    p = S.shape[0]
    if kind in ("banding", "tapering"):
        return np.arange(0, p)
    if kind == "threshold":
        off = np.abs(S[~np.eye(p, dtype=bool)])
        top = off.max() if off.size else 1.0
        return np.linspace(0.0, top, 41)
    raise ValueError(f"no grid for {kind!r}")


def cv_tune(kind: str, Y, grid: Sequence[float], folds: int = 5, rng=None) -> float:
    """Grid value minimising mean Frobenius distance to held-out sample covariances.

    Ties resolve to the earliest grid value.
    """
    grid = list(grid)
    if not grid:
        raise ValueError("tuning grid is empty")
    if folds < 2:
        raise ValueError("need at least two folds")
    if kind not in TUNED:
        raise ValueError(f"unknown tunable estimator {kind!r}")
    if len(grid) == 1:
        return grid[0]
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    n = Y.shape[0]
    if n < folds:
        raise ValueError(f"{n} observations cannot be split into {folds} folds")
    perm = as_generator(rng).permutation(n)
    parts = np.array_split(perm, folds)
    fn = TUNED[kind]
    loss = np.zeros(len(grid))
    for hold in parts:
        train = np.setdiff1d(perm, hold)
        S_tr = sample_cov(Y[train])
        S_te = sample_cov(Y[hold])
        for g, val in enumerate(grid):
            loss[g] += np.linalg.norm(fn(S_tr, val) - S_te)
    return grid[int(np.argmin(loss))]


@dataclass(frozen=True)
class EstimatorSpec:
    kind: str
    grid: tuple[float, ...] | None = None
    folds: int = 5

    def __post_init__(self) -> None:
        if self.grid is not None and len(self.grid) == 0:
            raise ValueError("tuning grid must not be empty")
