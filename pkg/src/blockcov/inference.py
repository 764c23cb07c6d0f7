"""Sufficient statistics, conjugate priors and posteriors, and the marginal likelihood."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels
from .blockmodel import CanonicalParams, expand, from_canonical
from .partitions import Partition
from .randgen import as_generator, inverse_gamma_sample, inverse_wishart_sample

__all__ = [
    "SufficientStats",
    "Hyperparams",
    "HyperpriorSpec",
    "PriorSpec",
    "PriorParams",
    "PosteriorParams",
    "gram",
    "median_variance",
    "sufficient_stats",
    "loglik",
    "prior_params",
    "posterior_params",
    "kernel_params",
    "log_marginal_likelihood",
    "posterior_mean_sigma",
    "prior_mean_sigma",
    "sample_A_lambda",
    "hyperprior_logdensity",
    "hyperprior_logdensity_x",
]

REGIMES = ("weak", "ck", "g", "hierarchical")


def gram(Y) -> np.ndarray:
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    return Y.T @ Y


def median_variance(G, n: int) -> float:
    """tau0 = median of the sample variances diag(G) / n."""
    return float(np.median(np.diag(G)) / n)


@dataclass(frozen=True)
class SufficientStats:
    """Partition-level statistics.

    ``C`` is the block-sum Gram ``Z'GZ``; ``M0 = D^{-1/2} C D^{-1/2}`` is the
    cross-product of the rotated block means, and ``q_u`` the residual sum of
    squares of the within-block contrasts.
    """

    n: int
    gram: np.ndarray
    partition: Partition
    C: np.ndarray
    d: np.ndarray
    M0: np.ndarray
    q: np.ndarray

    @property
    def sizes(self) -> np.ndarray:
        return np.asarray(self.partition.sizes, dtype=float)


def sufficient_stats(G, n: int, part: Partition) -> SufficientStats:
    G = np.asarray(G, dtype=float)
    if G.shape != (part.p, part.p):
        raise ValueError(f"Gram matrix of shape {G.shape} does not match p={part.p}")
    Z = part.membership()
    C = Z.T @ G @ Z
    C = 0.5 * (C + C.T)
    d = Z.T @ np.diag(G)
    sizes = np.asarray(part.sizes, dtype=float)
    root = np.sqrt(sizes)
    M0 = C / np.outer(root, root)
    q = d - np.diag(C) / sizes
    q = np.where(sizes > 1, np.maximum(q, 0.0), 0.0)
    return SufficientStats(int(n), G, part, C, d, M0, q)


@dataclass(frozen=True)
class Hyperparams:
    """theta = (nu0, s0, delta1, delta2, delta3) of the hierarchical prior."""

    nu0: float = 3.0
    s0: float = 2.0
    delta1: float = 0.5
    delta2: float = 0.0
    delta3: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.nu0, self.s0, self.delta1, self.delta2, self.delta3])

    @classmethod
    def initial(cls, tau0: float) -> "Hyperparams":
        return cls(nu0=3.0, s0=2.0, delta1=tau0 / 2, delta2=tau0 / 4, delta3=tau0 / 4)


@dataclass(frozen=True)
class HyperpriorSpec:
    """Gamma priors (shape, rate) on the deltas and Cauchy priors on log(nu0 - 2), log s0."""

    delta1: tuple[float, float] = (2.0, 4.0)
    delta2: tuple[float, float] = (10.0, 1.0)
    delta3: tuple[float, float] = (10.0, 1.0)
    cauchy_scale: float = 1.0


@dataclass(frozen=True)
class PriorSpec:
    """One of the four conditional prior regimes.

    ``tau0`` is the data scale (median sample variance) used by ``weak`` and ``ck``;
    ``theta`` carries the hierarchical hyperparameters.
    """

    regime: str = "hierarchical"
    tau0: float | None = None
    r0: float = 0.0
    nu0: float = 2.0
    s0: float = 2.0
    theta: Hyperparams | None = None
    hyperprior: HyperpriorSpec = field(default_factory=HyperpriorSpec)

    def __post_init__(self) -> None:
        if self.regime not in REGIMES:
            raise ValueError(f"unknown prior regime {self.regime!r}; choose from {REGIMES}")
        if not 0.0 <= self.r0 < 1.0:
            raise ValueError("r0 must lie in [0, 1)")
        if self.regime in ("weak", "ck"):
            if self.tau0 is None or not self.tau0 > 0:
                raise ValueError(f"regime {self.regime!r} needs a positive tau0")
            if not (self.nu0 > 0 and self.s0 > 0):
                raise ValueError("nu0 and s0 must be positive")
        if self.regime == "hierarchical" and self.theta is None:
            raise ValueError("hierarchical regime needs theta")

    @classmethod
    def weak(cls, tau0: float) -> "PriorSpec":
        return cls("weak", tau0=tau0, r0=0.0, nu0=2.0, s0=2.0)

    @classmethod
    def creal_kim(cls, tau0: float, r0: float = 0.35, nu0: float = 2.0, s0: float = 2.0) -> "PriorSpec":
        return cls("ck", tau0=tau0, r0=r0, nu0=nu0, s0=s0)

    @classmethod
    def g_prior(cls) -> "PriorSpec":
        return cls("g")

    @classmethod
    def hierarchical(cls, theta: Hyperparams, hyperprior: HyperpriorSpec | None = None) -> "PriorSpec":
        return cls("hierarchical", theta=theta, hyperprior=hyperprior or HyperpriorSpec())

    def with_theta(self, theta: Hyperparams) -> "PriorSpec":
        return replace(self, theta=theta)


@dataclass(frozen=True)
class PriorParams:
    """(nu0, A0, s0_u, lambda0_u) for one partition; singleton entries are placeholders."""

    nu0: float
    A0: np.ndarray
    s0: np.ndarray
    lam0: np.ndarray


@dataclass(frozen=True)
class PosteriorParams:
    nu_n: float
    A_n: np.ndarray
    s_n: np.ndarray
    lam_n: np.ndarray
    sizes: tuple[int, ...]


def prior_params(spec: PriorSpec, part: Partition, stats: SufficientStats | None = None) -> PriorParams:
    p = np.asarray(part.sizes, dtype=float)
    k = p.size
    if spec.regime in ("weak", "ck"):
        tau0, r0 = spec.tau0, spec.r0
        A0 = tau0 * np.diag(1.0 + r0 * (p - 1.0))
        return PriorParams(spec.nu0, A0, np.full(k, spec.s0), np.full(k, (1.0 - r0) * tau0))
    if spec.regime == "hierarchical":
        th = spec.theta
        root = np.sqrt(p)
        A0 = th.delta2 * np.outer(root, root) + np.diag(th.delta1 + p * th.delta3)
        return PriorParams(th.nu0, A0, np.full(k, th.s0), np.full(k, th.delta1))
    # g-prior: nu0 = 1, A0 = M0 / n, s0_u = p_u - 1, lambda0_u = MLE
    if stats is None:
        raise ValueError("the g-prior needs sufficient statistics")
    n = stats.n
    multi = p > 1
    if np.any(multi & (stats.q <= 0)):
        raise ValueError("g-prior undefined: a block with p_u >= 2 has zero contrast variation")
    lam0 = np.where(multi, stats.q / (n * np.maximum(p - 1.0, 1.0)), 0.0)
    return PriorParams(1.0, stats.M0 / n, p - 1.0, lam0)


def posterior_params(prior: PriorParams, stats: SufficientStats) -> PosteriorParams:
    n = stats.n
    p = stats.sizes
    nu_n = prior.nu0 + n
    A_n = (prior.nu0 * prior.A0 + stats.M0) / nu_n
    s_n = prior.s0 + n * (p - 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        lam_n = np.where(p > 1, (prior.s0 * prior.lam0 + stats.q) / s_n, 0.0)
    return PosteriorParams(nu_n, 0.5 * (A_n + A_n.T), s_n, lam_n, stats.partition.sizes)


def kernel_params(spec: PriorSpec, rho: float = 1.0) -> np.ndarray:
    """Pack a prior regime into the flat vector the compiled kernels take."""
    prm = np.zeros(8)
    prm[_kernels.P_RHO] = rho
    if spec.regime in ("weak", "ck"):
        c = spec.nu0 * spec.tau0
        prm[_kernels.P_NU0] = spec.nu0
        prm[_kernels.P_HLIN] = c * (1.0 - spec.r0)
        prm[_kernels.P_HSQ] = c * spec.r0
        prm[_kernels.P_S0] = spec.s0
        prm[_kernels.P_LAM0] = (1.0 - spec.r0) * spec.tau0
    elif spec.regime == "hierarchical":
        th = spec.theta
        prm[_kernels.P_NU0] = th.nu0
        prm[_kernels.P_HOUT] = th.nu0 * th.delta2
        prm[_kernels.P_HLIN] = th.nu0 * th.delta1
        prm[_kernels.P_HSQ] = th.nu0 * th.delta3
        prm[_kernels.P_S0] = th.s0
        prm[_kernels.P_LAM0] = th.delta1
    else:
        prm[_kernels.P_NU0] = 1.0
        prm[_kernels.P_G] = 1.0
    return prm


def _work(k: int) -> np.ndarray:
    return np.zeros((3, k + 1, k + 1))


def log_marginal_likelihood(stats: SufficientStats, spec: PriorSpec) -> float:
    """log p(Y | B) with (A, lambda) integrated out against the conjugate prior.

    Returns -inf when a required matrix is not positive definite (for the g-prior
    this happens when k > n).
    """
    k = stats.partition.k
    if spec.regime == "g":
        prior_params(spec, stats.partition, stats)  # raises on degenerate blocks
    return float(
        _kernels.log_ml(
            np.ascontiguousarray(stats.C), stats.d.copy(), stats.sizes.copy(), k,
            float(stats.n), float(stats.partition.p), kernel_params(spec), _work(k),
        )
    )


def loglik(cp: CanonicalParams, stats: SufficientStats) -> float:
    """Gaussian log-likelihood of the data given (A, lambda), from the statistics."""
    n = stats.n
    p = stats.sizes
    try:
        L = np.linalg.cholesky(cp.A)
    except np.linalg.LinAlgError:
        raise ValueError("A must be positive definite") from None
    multi = p > 1
    if np.any(cp.lam[multi] <= 0):
        raise ValueError("lambda_u must be positive for blocks with p_u >= 2")
    logdet = 2.0 * np.sum(np.log(np.diag(L)))
    X = np.linalg.solve(L, np.linalg.solve(L, stats.M0).T)
    out = -0.5 * n * stats.partition.p * math.log(2 * math.pi)
    out += -0.5 * n * logdet - 0.5 * np.trace(X)
    lam = cp.lam[multi]
    out += -0.5 * n * np.sum((p[multi] - 1.0) * np.log(lam)) - 0.5 * np.sum(stats.q[multi] / lam)
    return float(out)


def posterior_mean_sigma(post: PosteriorParams, part: Partition) -> np.ndarray:
    cp = CanonicalParams(post.A_n, post.lam_n)
    return expand(from_canonical(cp, part.sizes), part)


def prior_mean_sigma(prior: PriorParams, part: Partition) -> np.ndarray:
    cp = CanonicalParams(prior.A0, np.where(np.asarray(part.sizes) > 1, prior.lam0, 0.0))
    return expand(from_canonical(cp, part.sizes), part)


def sample_A_lambda(post: PosteriorParams, rng) -> CanonicalParams:
    """Draw (A, lambda) ~ IW(nu_n + k + 1, nu_n A_n) x prod IG((s_n+2)/2, s_n lambda_n / 2)."""
    gen = as_generator(rng)
    k = post.A_n.shape[0]
    A = inverse_wishart_sample(post.nu_n + k + 1, post.nu_n * post.A_n, gen)
    lam = np.zeros(k)
    for u, m in enumerate(post.sizes):
        if m > 1:
            lam[u] = inverse_gamma_sample(
                0.5 * (post.s_n[u] + 2.0), 0.5 * post.s_n[u] * post.lam_n[u], gen
            )
    return CanonicalParams(A, lam)


def _gamma_log_terms(logs, spec: HyperpriorSpec) -> float:
    # Gamma(shape, rate) log-densities at exp(logs), without the Jacobian of the log map
    out = 0.0
    for y, (shape, rate) in zip(logs, (spec.delta1, spec.delta2, spec.delta3)):
        out += shape * math.log(rate) - math.lgamma(shape) + (shape - 1.0) * y - rate * math.exp(y)
    return out


def _cauchy_log_terms(logs, spec: HyperpriorSpec) -> float:
    c = spec.cauchy_scale
    return -sum(math.log(math.pi * c) + math.log1p((y / c) ** 2) for y in logs)


def hyperprior_logdensity(theta: Hyperparams, spec: HyperpriorSpec | None = None) -> float:
    """Gamma log-densities of the deltas plus Cauchy log-densities of log(nu0-2), log s0.

    The Cauchy terms are densities of the log-transformed variables; any further
    change of variables is the caller's responsibility.
    """
    spec = spec or HyperpriorSpec()
    if not (theta.nu0 > 2 and theta.s0 > 0 and theta.delta1 > 0 and theta.delta2 > 0 and theta.delta3 > 0):
        return -math.inf
    # closed forms rather than scipy.stats: this sits in the inner loop of the theta update
    deltas = (math.log(theta.delta1), math.log(theta.delta2), math.log(theta.delta3))
    logs = (math.log(theta.nu0 - 2.0), math.log(theta.s0))
    return float(_gamma_log_terms(deltas, spec) + _cauchy_log_terms(logs, spec))


def hyperprior_logdensity_x(x, spec: HyperpriorSpec | None = None) -> float:
    """Hyperprior log-density of x = (log(nu0-2), log s0, log delta1, log delta2, log delta3).

    Evaluated in the log coordinates directly, so it stays exact where nu0 - 2 or
    a delta would underflow if mapped back to theta. Includes the log-Jacobian
    of the delta transforms; the Cauchy priors are already on the log scale.
    """
    spec = spec or HyperpriorSpec()
    x = [float(v) for v in x]
    jac = x[2] + x[3] + x[4]
    return float(_gamma_log_terms(x[2:5], spec) + jac + _cauchy_log_terms(x[:2], spec))
