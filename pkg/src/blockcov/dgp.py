"""Synthetic covariance constructions and data generation for the benchmark suite."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .blockmodel import CanonicalParams, expand, from_canonical
from .partitions import Partition
from .randgen import (
    as_generator,
    inverse_gamma_sample,
    inverse_wishart_sample,
    mvn_sample,
)

__all__ = [
    "KINDS",
    "ORDERED",
    "ScenarioSpec",
    "Scenario",
    "ordered_cov",
    "grouping_labels",
    "grouped_random",
    "factor_based",
    "factor_partition",
    "block_sparse",
    "eigen_based",
    "mixture_grouped",
    "random_iw",
    "degenerate_unit",
    "sample_data",
    "build_sigma",
]

ORDERED = ("ma1", "ar1", "longrange", "toeplitz")
KINDS = ORDERED + (
    "grouped",
    "factor",
    "blocksparse_banded",
    "blocksparse_entrywise",
    "eigen_discrete",
    "eigen_uniform",
    "mixture_grouped",
    "random_iw",
    "degenerate_unit",
)
_PD_TOL = -1e-9


def _check_pd(sigma: np.ndarray, what: str) -> np.ndarray:
    lo = np.linalg.eigvalsh(sigma).min()
    if lo < _PD_TOL:
        raise ValueError(f"{what} is not positive definite (min eigenvalue {lo:.3e})")
    return sigma


def ordered_cov(kind: str, p: int, rho: float = 0.5, H: float = 0.7, alpha: float = 0.3) -> np.ndarray:
    if p < 1:
        raise ValueError("p must be >= 1")
    dist = np.abs(np.subtract.outer(np.arange(p), np.arange(p))).astype(float)
    if kind == "ma1":
        sigma = np.where(dist <= 1, rho**dist, 0.0)
    elif kind == "ar1":
        sigma = rho**dist
    elif kind == "longrange":
        h2 = 2.0 * H
        sigma = 0.5 * ((dist + 1) ** h2 - 2 * dist**h2 + np.abs(dist - 1) ** h2)
    elif kind == "toeplitz":
        with np.errstate(divide="ignore"):
            sigma = rho * dist ** (-(alpha + 1.0))
        np.fill_diagonal(sigma, 1.0)
    else:
        raise ValueError(f"unknown ordered kind {kind!r}")
    return _check_pd(sigma, kind)


def grouping_labels(p: int, kstar: int, rng) -> np.ndarray:
    """Labels with Pr(c = u) proportional to max(0.1, 0.7^u), u = 1..kstar."""
    if kstar < 1:
        raise ValueError("kstar must be >= 1")
    u = np.arange(1, kstar + 1)
    w = np.maximum(0.1, 0.7**u)
    return as_generator(rng).choice(kstar, size=p, p=w / w.sum())


def grouped_random(p: int, kstar: int, tau: float, deltas, rng, max_tries: int = 100):
    """Random grouped covariance from the hierarchical conjugate prior with precision tau.

    Returns (truth partition, Sigma).
    """
    gen = as_generator(rng)
    d1, d2, d3 = (float(x) for x in deltas)
    if d1 <= 0 or d2 < 0 or d3 < 0 or tau <= 0:
        raise ValueError("need delta1 > 0, delta2, delta3 >= 0 and tau > 0")
    part = Partition(tuple(int(c) for c in grouping_labels(p, kstar, gen)))
    sizes = np.asarray(part.sizes, dtype=float)
    k = part.k
    root = np.sqrt(sizes)
    A0 = d2 * np.outer(root, root) + np.diag(d1 + sizes * d3)
    for _ in range(max_tries):
        A = inverse_wishart_sample(tau + k + 1, tau * A0, gen)
        lam = np.zeros(k)
        for u in range(k):
            if sizes[u] > 1:
                lam[u] = inverse_gamma_sample(0.5 * (tau + 2.0), 0.5 * tau * d1, gen)
        sigma = expand(from_canonical(CanonicalParams(A, lam), part.sizes), part)
        if np.linalg.eigvalsh(sigma).min() > 0:
            return part, sigma
    raise ValueError(f"no positive definite draw in {max_tries} attempts")


def _group_sizes(p: int) -> tuple[int, int, int]:
    g1 = int(round(0.4 * p))
    g2 = int(round(0.4 * p))
    return g1, g2, p - g1 - g2


def factor_partition(p: int) -> Partition:
    g1, g2, g3 = _group_sizes(p)
    return Partition((1,) * g1 + (2,) * g2 + (3,) * g3)


def factor_based(p: int) -> np.ndarray:
    """Exact covariance of y_i = f_{g(i)} + e_i with f3 = -0.3 f1 + 0.925 f2 + gamma."""
    if p < 5:
        raise ValueError("factor_based needs p >= 5")
    F = np.array([
        [290.0, 0.0, -0.3 * 290.0],
        [0.0, 300.0, 0.925 * 300.0],
        [-0.3 * 290.0, 0.925 * 300.0, 0.09 * 290.0 + 0.925**2 * 300.0 + 1.0],
    ])
    lab = factor_partition(p).label_array()
    return F[np.ix_(lab, lab)] + np.eye(p)


def block_sparse(p: int, variant: str, rng=None) -> np.ndarray:
    if p % 2:
        raise ValueError("block_sparse needs an even p")
    h = p // 2
    sigma = np.zeros((p, p))
    sigma[:h, :h] = 4.0 * np.eye(h)
    if variant == "banded":
        dist = np.abs(np.subtract.outer(np.arange(h), np.arange(h)))
        A2 = np.clip(1.0 - dist / 10.0, 0.0, None)
    elif variant == "entrywise":
        gen = as_generator(rng)
        vals = gen.uniform(0.3, 0.8, size=(h, h)) * (gen.uniform(size=(h, h)) < 0.2)
        B = np.triu(vals)
        B = B + np.triu(B, 1).T
        eps = max(-np.linalg.eigvalsh(B).min(), 0.0) + 0.01
        A2 = B + eps * np.eye(h)
    else:
        raise ValueError(f"unknown block-sparse variant {variant!r}")
    sigma[h:, h:] = A2
    return _check_pd(sigma, f"block_sparse[{variant}]")


def random_orthonormal(p: int, rng) -> np.ndarray:
    Z = as_generator(rng).standard_normal((p, p))
    Q, R = np.linalg.qr(Z)
    return Q * np.sign(np.diag(R))


def eigen_based(p: int, mode: str, rng) -> np.ndarray:
    gen = as_generator(rng)
    if mode == "discrete":
        n10 = int(round(0.4 * p))
        n3 = int(round(0.4 * p))
        e = np.concatenate([np.full(n10, 10.0), np.full(n3, 3.0), np.ones(p - n10 - n3)])
    elif mode == "uniform":
        e = gen.uniform(1.0, 10.0, size=p)
    else:
        raise ValueError(f"unknown eigen mode {mode!r}")
    U = random_orthonormal(p, gen)
    sigma = (U * e) @ U.T
    return 0.5 * (sigma + sigma.T)


_IG_DEFAULT = (0.5, 0.2, 0.3)


def _inhomogeneous(p: int, rng):
    return grouped_random(p, max(1, p // 5), 10.0, _IG_DEFAULT, rng)


def mixture_grouped(p: int, rng) -> np.ndarray:
    gen = as_generator(rng)
    return sum(_inhomogeneous(p, gen)[1] for _ in range(3)) / 3.0


def random_iw(p: int, rng, sigma_ig=None) -> np.ndarray:
    """IW(nu, (nu - p - 1) Sigma_ig) with nu = p + 2, so E = Sigma_ig."""
    gen = as_generator(rng)
    if sigma_ig is None:
        sigma_ig = _inhomogeneous(p, gen)[1]
    nu = p + 2
    return inverse_wishart_sample(nu, (nu - p - 1) * sigma_ig, gen)


def degenerate_unit(p: int) -> np.ndarray:
    return np.eye(p)


def sample_data(sigma, n: int, rng) -> np.ndarray:
    return mvn_sample(sigma, rng, size=int(n))


@dataclass(frozen=True)
class ScenarioSpec:
    """A data-generating scenario; defaults follow the benchmark design."""

    kind: str
    p: int = 50
    n: int = 50
    rho: float = 0.5
    H: float = 0.7
    alpha: float = 0.3
    kstar: int | None = None
    tau: float = 10.0
    deltas: tuple[float, float, float] = _IG_DEFAULT

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown scenario kind {self.kind!r}; choose from {KINDS}")
        if self.p < 1 or self.n < 1:
            raise ValueError("p and n must be positive")
        if self.kind in ("blocksparse_banded", "blocksparse_entrywise") and self.p % 2:
            raise ValueError("block-sparse scenarios need an even p")
        if self.kind in ("factor", "eigen_discrete", "eigen_uniform", "mixture_grouped", "random_iw") and self.p < 5:
            raise ValueError(f"{self.kind} needs p >= 5")
        object.__setattr__(self, "deltas", tuple(float(x) for x in self.deltas))

    @property
    def effective_kstar(self) -> int:
        return self.kstar if self.kstar is not None else max(1, self.p // 5)

    def echo(self) -> dict:
        out = asdict(self)
        out["deltas"] = list(self.deltas)
        out["kstar"] = self.effective_kstar
        return out


@dataclass(frozen=True)
class Scenario:
    spec: ScenarioSpec
    sigma: np.ndarray
    truth: Partition | None


def build_sigma(spec: ScenarioSpec, rng) -> Scenario:
    """Population covariance (and truth partition where one exists) for a scenario."""
    kind, p = spec.kind, spec.p
    truth = None
    if kind in ORDERED:
        sigma = ordered_cov(kind, p, spec.rho, spec.H, spec.alpha)
    elif kind == "grouped":
        truth, sigma = grouped_random(p, spec.effective_kstar, spec.tau, spec.deltas, rng)
    elif kind == "factor":
        sigma, truth = factor_based(p), factor_partition(p)
    elif kind == "blocksparse_banded":
        sigma = block_sparse(p, "banded")
    elif kind == "blocksparse_entrywise":
        sigma = block_sparse(p, "entrywise", rng)
    elif kind == "eigen_discrete":
        sigma = eigen_based(p, "discrete", rng)
    elif kind == "eigen_uniform":
        sigma = eigen_based(p, "uniform", rng)
    elif kind == "mixture_grouped":
        sigma = mixture_grouped(p, rng)
    elif kind == "random_iw":
        sigma = random_iw(p, rng)
    else:
        sigma = degenerate_unit(p)
    _check_pd(sigma, kind)
    return Scenario(spec, sigma, truth)
