"""MCMC over partitions (Gibbs scans plus SAMS merge-split) with hyperparameter learning."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
from scipy.special import gammaln, multigammaln

from . import _kernels
from .blockmodel import CanonicalParams
from .inference import (
    Hyperparams,
    HyperpriorSpec,
    PriorSpec,
    gram,
    hyperprior_logdensity_x,
    kernel_params,
    log_marginal_likelihood,
    median_variance,
    posterior_mean_sigma,
    posterior_params,
    prior_params,
    sample_A_lambda,
    sufficient_stats,
)
from .partitions import MfmPrior, Partition, eppf_log, log_V_table
from .randgen import RandomStream, as_generator

__all__ = [
    "ChainConfig",
    "ChainState",
    "ChainOutput",
    "AdaptiveMetropolis",
    "NumericalFailure",
    "make_prior",
    "gibbs_scan",
    "sams_move",
    "update_theta_am",
    "theta_to_x",
    "x_to_theta",
    "conditional_logdensity",
    "run_chain",
    "estimate",
]


class NumericalFailure(FloatingPointError):
    """Non-finite marginal likelihood or a cache mismatch; carries a state dump."""

    def __init__(self, message: str, dump: dict | None = None):
        super().__init__(message)
        self.dump = dump or {}


@dataclass(frozen=True)
class ChainConfig:
    iterations: int = 5000
    burnin: int = 500
    thin: int = 5
    sams_repeats: int = 5
    gibbs: bool = True
    prior: str = "hierarchical"
    r0: float = 0.35
    rho: float = 1.0
    seed: int = 0
    update_theta: bool = True
    theta0: Hyperparams | None = None
    hyperprior: HyperpriorSpec = field(default_factory=HyperpriorSpec)
    am_target_accept: float = 0.234
    am_decay: float = 0.6
    am_init_scale: float = 0.01
    check_every: int = 100

    def __post_init__(self) -> None:
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if not 0 <= self.burnin < self.iterations:
            raise ValueError("need 0 <= burnin < iterations")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")
        if self.sams_repeats < 0:
            raise ValueError("sams_repeats must be >= 0")
        if self.rho <= 0:
            raise ValueError("rho must be positive")
        if self.prior not in ("weak", "ck", "g", "hierarchical"):
            raise ValueError(f"unknown prior {self.prior!r}")

    def echo(self) -> dict:
        out = asdict(self)
        out["theta0"] = None if self.theta0 is None else asdict(self.theta0)
        return out


@dataclass
class ChainState:
    """Mutable single-owner chain state. ``labels`` are compact 0-based block ids.

    ``theta_x`` holds theta in the adaptive-Metropolis coordinates once the theta
    update has run; it is authoritative because mapping back to theta can round
    (nu0 = 2 + exp(x) equals 2.0 for x below about -37).
    """

    labels: np.ndarray
    k: int
    spec: PriorSpec
    canon: CanonicalParams | None = None
    theta_x: np.ndarray | None = None

    def partition(self) -> Partition:
        return Partition(tuple(int(x) for x in self.labels))


@dataclass
class ChainOutput:
    partition_trace: list[Partition]
    retained_iterations: np.ndarray
    k_trace: np.ndarray
    theta_trace: np.ndarray
    sigma_mean: np.ndarray
    psm: np.ndarray
    log_marg_trace: np.ndarray
    log_post_trace: np.ndarray
    acceptance: dict
    seed: int
    diagnostics: dict
    config: ChainConfig

    # the conventional names used elsewhere
    @property
    def running_sigma_mean(self) -> np.ndarray:
        return self.sigma_mean


class _Data:
    """Frozen per-dataset quantities plus reusable kernel buffers."""

    def __init__(self, Y, G=None, n=None):
        if G is None:
            Y = np.atleast_2d(np.asarray(Y, dtype=float))
            if Y.shape[0] < 1 or Y.shape[1] < 1:
                raise ValueError("data must have n >= 1 rows and p >= 1 columns")
            G = gram(Y)
            n = Y.shape[0]
        self.G = np.ascontiguousarray(G, dtype=float)
        self.n = int(n)
        self.p = self.G.shape[0]
        self.tau0 = median_variance(self.G, self.n)
        self.C = np.zeros((self.p + 1, self.p + 1))
        self.d = np.zeros(self.p + 1)
        self.sizes = np.zeros(self.p + 1)
        self.work = np.zeros((3, self.p + 1, self.p + 1))


def make_prior(config: ChainConfig, tau0: float) -> PriorSpec:
    if config.prior == "weak":
        return PriorSpec.weak(tau0)
    if config.prior == "ck":
        return PriorSpec.creal_kim(tau0, config.r0)
    if config.prior == "g":
        return PriorSpec.g_prior()
    theta = config.theta0 or Hyperparams.initial(tau0)
    return PriorSpec.hierarchical(theta, config.hyperprior)


def _theta_row(spec: PriorSpec) -> np.ndarray:
    if spec.regime == "hierarchical":
        return spec.theta.as_array()
    if spec.regime == "g":
        return np.array([1.0, np.nan, np.nan, np.nan, np.nan])
    # weak / Creal-Kim sit in the homogeneous subspace at these coordinates
    return np.array([spec.nu0, spec.s0, spec.tau0 * (1 - spec.r0), 0.0, spec.tau0 * spec.r0])


def gibbs_scan(state: ChainState, data: _Data, logV: np.ndarray, rho: float, rng) -> ChainState:
    gen = as_generator(rng)
    unif = gen.random(data.p)
    state.k = int(
        _kernels.gibbs_sweep(
            data.G, float(data.n), state.labels, state.k, kernel_params(state.spec, rho),
            logV, unif, data.C, data.d, data.sizes, data.work,
        )
    )
    return state


def sams_move(state: ChainState, data: _Data, logV: np.ndarray, rho: float, rng):
    """One merge/split proposal; returns (state, accepted, was_split)."""
    if data.p < 2:
        return state, False, False
    gen = as_generator(rng)
    unif = gen.random(2 * data.p + 3)
    k, acc, split, _ = _kernels.sams_step(
        data.G, float(data.n), state.labels, state.k, kernel_params(state.spec, rho),
        logV, unif, data.C, data.d, data.sizes, data.work,
    )
    state.k = int(k)
    return state, bool(acc), bool(split)


# --- hyperparameter update -------------------------------------------------


def theta_to_x(theta: Hyperparams) -> np.ndarray:
    return np.array([
        math.log(theta.nu0 - 2.0), math.log(theta.s0),
        math.log(theta.delta1), math.log(theta.delta2), math.log(theta.delta3),
    ])


def x_to_theta(x) -> Hyperparams:
    e = np.exp(np.asarray(x, dtype=float))
    return Hyperparams(nu0=2.0 + e[0], s0=e[1], delta1=e[2], delta2=e[3], delta3=e[4])


def _iw_logpdf(X, df, scale) -> float:
    k = X.shape[0]
    try:
        Lx = np.linalg.cholesky(X)
        Ls = np.linalg.cholesky(scale)
    except np.linalg.LinAlgError:
        return -math.inf
    logdet_x = 2.0 * np.sum(np.log(np.diag(Lx)))
    logdet_s = 2.0 * np.sum(np.log(np.diag(Ls)))
    W = np.linalg.solve(Lx, Ls)
    return float(
        0.5 * df * logdet_s - 0.5 * df * k * math.log(2.0) - multigammaln(0.5 * df, k)
        - 0.5 * (df + k + 1) * logdet_x - 0.5 * np.sum(W * W)
    )


def _ig_logpdf(x, shape, rate) -> float:
    return float(shape * math.log(rate) - gammaln(shape) - (shape + 1) * math.log(x) - rate / x)


def conditional_logdensity(canon: CanonicalParams, theta: Hyperparams, sizes) -> float:
    """log p(A, lambda | theta, B) under the hierarchical conditional prior."""
    if not (theta.s0 > 0 and theta.delta1 > 0 and theta.delta2 >= 0 and theta.delta3 >= 0):
        return -math.inf  # a log coordinate underflowed
    p = np.asarray(sizes, dtype=float)
    root = np.sqrt(p)
    A0 = theta.delta2 * np.outer(root, root) + np.diag(theta.delta1 + p * theta.delta3)
    k = p.size
    out = _iw_logpdf(canon.A, theta.nu0 + k + 1, theta.nu0 * A0)
    shape, rate = 0.5 * (theta.s0 + 2.0), 0.5 * theta.s0 * theta.delta1
    for u in range(k):
        if p[u] > 1:
            out += _ig_logpdf(canon.lam[u], shape, rate)
    return out


@dataclass
class AdaptiveMetropolis:
    """Random-walk Metropolis with global adaptive scaling (Andrieu and Thoms, Algorithm 4).

    Proposal ``x' ~ N(x, exp(log_scale) * (cov + ridge I))``. While adapting, step
    ``t`` uses gain ``(t + 1)^-decay`` to move ``log_scale`` toward the target
    acceptance rate and to track the running mean and covariance of the chain. The
    offset keeps the first gain below one, so a rejected first proposal does not
    collapse the covariance to zero. A zero initial scale is a degenerate
    configuration: the chain never moves and ``degenerate`` is set.
    """

    dim: int
    target_accept: float = 0.234
    decay: float = 0.6
    init_scale: float = 0.01
    adapt_until: int | None = None
    mean: np.ndarray | None = None
    cov: np.ndarray | None = None
    log_scale: float = 0.0
    t: int = 0
    n_accept: int = 0
    n_prop: int = 0
    degenerate: bool = False
    ridge: float = 1e-10

    def __post_init__(self) -> None:
        self._chol = None
        if self.cov is None:
            self.cov = self.init_scale * np.eye(self.dim)
        self.degenerate = not np.any(self.cov)
        if self.mean is None:
            self.mean = np.zeros(self.dim)
            self._mean_set = False
        else:
            self._mean_set = True

    @property
    def acceptance_rate(self) -> float:
        return self.n_accept / self.n_prop if self.n_prop else float("nan")

    def step(self, x, logpi: Callable[[np.ndarray], float], rng):
        gen = as_generator(rng)
        x = np.asarray(x, dtype=float)
        if not self._mean_set:
            self.mean = x.copy()
            self._mean_set = True
        self.t += 1
        if self.degenerate:
            self.n_prop += 1
            return x, False
        if self._chol is None:
            cov = math.exp(self.log_scale) * (self.cov + self.ridge * np.eye(self.dim))
            try:
                self._chol = np.linalg.cholesky(cov)
            except np.linalg.LinAlgError:
                w, v = np.linalg.eigh(cov)
                self._chol = v * np.sqrt(np.clip(w, 0.0, None))
        prop = x + self._chol @ gen.standard_normal(self.dim)
        lp_cur = logpi(x)
        lp_new = logpi(prop)
        log_alpha = lp_new - lp_cur if np.isfinite(lp_new) else -math.inf
        accept = math.log(gen.uniform()) < log_alpha
        self.n_prop += 1
        if accept:
            self.n_accept += 1
            x = prop
        if self.adapt_until is None or self.t <= self.adapt_until:
            gamma = (self.t + 1) ** (-self.decay)
            alpha = math.exp(min(0.0, log_alpha))
            self.log_scale += gamma * (alpha - self.target_accept)
            diff = x - self.mean
            self.mean = self.mean + gamma * diff
            self.cov = self.cov + gamma * (np.outer(diff, diff) - self.cov)
            self.cov = 0.5 * (self.cov + self.cov.T)
            self._chol = None
        return x, bool(accept)


def update_theta_am(state: ChainState, am: AdaptiveMetropolis, rng,
                    conditional: Callable[[Hyperparams], float] | None = None) -> tuple[ChainState, bool]:
    """One adaptive-Metropolis update of theta on (log(nu0-2), log s0, log deltas).

    The target is the hyperprior density of the transformed vector times
    p(A, lambda | theta, B); ``conditional`` replaces the second factor (test hook).
    """
    spec = state.spec
    hp = spec.hyperprior
    sizes = np.bincount(state.labels, minlength=state.k)[: state.k]
    if conditional is None:
        canon = state.canon

        def conditional(th):
            return conditional_logdensity(canon, th, sizes)

    def logpi(x):
        if not np.all(np.isfinite(x)) or np.any(np.abs(x) > 700):
            return -math.inf
        return hyperprior_logdensity_x(x, hp) + conditional(x_to_theta(x))

    x0 = state.theta_x if state.theta_x is not None else theta_to_x(spec.theta)
    x1, acc = am.step(x0, logpi, rng)
    if acc:
        state.spec = spec.with_theta(x_to_theta(x1))
        state.theta_x = x1
    return state, acc


def _stats_from_state(state: ChainState, data: _Data):
    part = state.partition()
    return part, sufficient_stats(data.G, data.n, part)


def _posterior_mean(state: ChainState, data: _Data):
    part, st = _stats_from_state(state, data)
    post = posterior_params(prior_params(state.spec, part, st), st)
    return part, st, posterior_mean_sigma(post, part)


def run_chain(Y, config: ChainConfig | None = None, *, G=None, n=None,
              conditional: Callable[[Hyperparams], float] | None = None,
              init_labels=None) -> ChainOutput:
    """Run the sampler on data ``Y`` (or on a Gram matrix ``G`` with ``n`` rows)."""
    config = config or ChainConfig()
    data = _Data(Y, G, n)
    p = data.p
    mfm = MfmPrior(config.rho)
    logV = log_V_table(p, mfm)
    stream = RandomStream(config.seed, ("chain",))
    gen = stream.generator
    spec = make_prior(config, data.tau0)
    if init_labels is None:
        labels = np.zeros(p, dtype=np.int64)
    else:
        labels = Partition(tuple(init_labels)).label_array().astype(np.int64)
    state = ChainState(labels=labels, k=int(labels.max()) + 1, spec=spec)
    hier = spec.regime == "hierarchical" and config.update_theta
    am = AdaptiveMetropolis(
        5, config.am_target_accept, config.am_decay, config.am_init_scale,
        adapt_until=config.burnin,
    )

    T = config.iterations
    k_trace = np.zeros(T, dtype=np.int64)
    theta_trace = np.zeros((T, 5))
    part_trace: list[Partition] = []
    kept: list[int] = []
    log_marg: list[float] = []
    log_post: list[float] = []
    sigma_acc = np.zeros((p, p))
    psm_acc = np.zeros((p, p))
    n_split = n_split_acc = n_merge = n_merge_acc = n_theta_acc = 0

    for t in range(1, T + 1):
        if config.gibbs:
            gibbs_scan(state, data, logV, config.rho, gen)
        for _ in range(config.sams_repeats):
            state, acc, split = sams_move(state, data, logV, config.rho, gen)
            if split:
                n_split += 1
                n_split_acc += acc
            else:
                n_merge += 1
                n_merge_acc += acc
        if hier:
            part, st = _stats_from_state(state, data)
            post = posterior_params(prior_params(state.spec, part, st), st)
            state.canon = sample_A_lambda(post, gen)
            # canon is indexed by canonical block order; keep labels in that order too
            state.labels = part.label_array().astype(np.int64)
            state, acc = update_theta_am(state, am, gen, conditional)
            n_theta_acc += acc
        k_trace[t - 1] = state.k
        theta_trace[t - 1] = _theta_row(state.spec)

        check = config.check_every and t % config.check_every == 0
        retain = t > config.burnin and (t - config.burnin) % config.thin == 0
        if retain or check:
            part, st, sigma_t = _posterior_mean(state, data)
            lm = log_marginal_likelihood(st, state.spec)
            if not np.isfinite(lm):
                raise NumericalFailure(
                    f"non-finite log marginal likelihood at iteration {t}",
                    {"iteration": t, "labels": list(part.labels), "theta": _theta_row(state.spec).tolist()},
                )
            if check:
                _kernels.block_stats(data.G, state.labels, state.k, data.C, data.d, data.sizes)
                cached = _kernels.log_ml(
                    data.C, data.d, data.sizes, state.k, float(data.n), float(p),
                    kernel_params(state.spec, config.rho), data.work,
                )
                if abs(cached - lm) > 1e-8 * max(1.0, abs(lm)):
                    raise NumericalFailure(
                        f"cached log marginal {cached} differs from recomputation {lm}",
                        {"iteration": t, "labels": list(part.labels)},
                    )
            if retain:
                kept.append(t)
                part_trace.append(part)
                log_marg.append(lm)
                log_post.append(lm + eppf_log(part, mfm))
                sigma_acc += sigma_t
                lab = part.label_array()
                psm_acc += lab[:, None] == lab[None, :]

    m = len(part_trace)
    sigma_mean = sigma_acc / m
    sigma_mean = 0.5 * (sigma_mean + sigma_mean.T)
    acceptance = {
        "split": n_split_acc / n_split if n_split else float("nan"),
        "merge": n_merge_acc / n_merge if n_merge else float("nan"),
        "theta": n_theta_acc / T if hier else float("nan"),
    }
    diagnostics = {
        "retained": m,
        "n_split_proposals": n_split,
        "n_merge_proposals": n_merge,
        "am_log_scale": am.log_scale,
        "am_degenerate": am.degenerate,
        "tau0": data.tau0,
        "final_log_marginal": log_marg[-1],
    }
    return ChainOutput(
        partition_trace=part_trace,
        retained_iterations=np.asarray(kept),
        k_trace=k_trace,
        theta_trace=theta_trace,
        sigma_mean=sigma_mean,
        psm=psm_acc / m,
        log_marg_trace=np.asarray(log_marg),
        log_post_trace=np.asarray(log_post),
        acceptance=acceptance,
        seed=config.seed,
        diagnostics=diagnostics,
        config=config,
    )


def estimate(output: ChainOutput):
    """(posterior mean covariance, highest-scoring retained partition, PSM, diagnostics)."""
    if not output.partition_trace:
        raise ValueError("the chain retained no iterations")
    best = int(np.argmax(output.log_post_trace))
    diag = dict(output.diagnostics)
    diag["acceptance"] = dict(output.acceptance)
    diag["point_log_posterior"] = float(output.log_post_trace[best])
    return output.sigma_mean, output.partition_trace[best], output.psm, diag
