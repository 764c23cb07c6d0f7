"""Partitions of variable indices, the MFM partition prior, and partition metrics."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Iterator, Sequence

import numpy as np
from scipy.special import gammaln

from .randgen import as_generator, dirichlet_sample

__all__ = [
    "Partition",
    "MfmPrior",
    "AmbiguousPartitionError",
    "from_labels",
    "set_partitions",
    "log_V",
    "log_V_table",
    "eppf_log",
    "sample_partition",
    "ari",
    "posterior_similarity",
    "r2_loss",
    "recover_partition",
    "coclustering",
]


class AmbiguousPartitionError(ValueError):
    """Near-equalities under the tolerance do not form an equivalence relation."""


def _canonical(labels) -> tuple[int, ...]:
    seen: dict = {}
    out = []
    for lab in labels:
        if lab not in seen:
            seen[lab] = len(seen) + 1
        out.append(seen[lab])
    return tuple(out)


@dataclass(frozen=True)
class Partition:
    """Partition of ``{0, ..., p-1}`` stored as canonical 1-based labels.

    Labels are renumbered by first occurrence, so two partitions compare equal
    exactly when they induce the same blocks.
    """

    labels: tuple[int, ...]
    blocks: tuple[tuple[int, ...], ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        labels = _canonical(self.labels)
        if not labels:
            raise ValueError("a partition needs at least one element")
        object.__setattr__(self, "labels", labels)
        blocks: list[list[int]] = [[] for _ in range(max(labels))]
        for i, lab in enumerate(labels):
            blocks[lab - 1].append(i)
        object.__setattr__(self, "blocks", tuple(tuple(b) for b in blocks))

    @property
    def p(self) -> int:
        return len(self.labels)

    @property
    def k(self) -> int:
        return len(self.blocks)

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(len(b) for b in self.blocks)

    def label_array(self) -> np.ndarray:
        """0-based block index per variable."""
        return np.asarray(self.labels, dtype=np.int64) - 1

    def membership(self) -> np.ndarray:
        """p x k indicator matrix."""
        Z = np.zeros((self.p, self.k))
        Z[np.arange(self.p), self.label_array()] = 1.0
        return Z

    @classmethod
    def single_block(cls, p: int) -> "Partition":
        return cls((1,) * p)

    @classmethod
    def singletons(cls, p: int) -> "Partition":
        return cls(tuple(range(1, p + 1)))


def from_labels(labels: Sequence[int]) -> Partition:
    labels = list(labels)
    if not labels:
        raise ValueError("cannot build a partition from an empty label sequence")
    return Partition(tuple(labels))


def set_partitions(p: int) -> Iterator[Partition]:
    """All set partitions of ``p`` items (restricted growth strings); Bell(p) of them."""
    if p < 1:
        raise ValueError("p must be >= 1")
    a = [0] * p

    def rec(i: int, m: int):
        if i == p:
            yield Partition(tuple(x + 1 for x in a))
            return
        for v in range(m + 2):
            a[i] = v
            yield from rec(i + 1, max(m, v))

    yield from rec(1, 0)


def _poisson1_shifted(u: int) -> float:
    return -1.0 - math.lgamma(u)


@dataclass(frozen=True)
class MfmPrior:
    """Mixture-of-finite-mixtures partition prior.

    ``log_pmf`` is the log of the component-count pmf on {1, 2, ...}; the default
    is a unit-mean Poisson shifted right by one.
    """

    rho: float = 1.0
    log_pmf: Callable[[int], float] = field(default=_poisson1_shifted, compare=True)

    def __post_init__(self) -> None:
        if not self.rho > 0:
            raise ValueError("rho must be positive")


_MAX_TERMS = 100_000


@lru_cache(maxsize=4096)
def _log_V_cached(p: int, k: int, rho: float, log_pmf) -> float:
    if not 1 <= k <= p:
        raise ValueError(f"need 1 <= k <= p, got k={k}, p={p}")
    # log u_(k) - log (rho u)^(p) with u_(k) = 0 for u < k
    total = -math.inf
    for u in range(k, k + _MAX_TERMS):
        term = (
            log_pmf(u)
            + math.lgamma(u + 1) - math.lgamma(u - k + 1)
            - (math.lgamma(rho * u + p) - math.lgamma(rho * u))
        )
        if term > total:
            total = term + math.log1p(math.exp(total - term)) if total > -math.inf else term
        else:
            total = total + math.log1p(math.exp(term - total))
        if u >= k + 50 and term < total + math.log(1e-14):
            return total
    raise ArithmeticError(
        f"V_p(k) series did not converge within {_MAX_TERMS} terms (p={p}, k={k});"
        " the component-count pmf is too heavy-tailed"
    )


def log_V(p: int, k: int, prior: MfmPrior) -> float:
    """log V_p(k) = log sum_u f(u) u_(k) / (rho u)^(p)."""
    return _log_V_cached(int(p), int(k), float(prior.rho), prior.log_pmf)


def log_V_table(p: int, prior: MfmPrior) -> np.ndarray:
    """Array ``t`` with ``t[k] = log V_p(k)`` for k = 1..p (``t[0]`` unused, -inf)."""
    out = np.full(p + 2, -np.inf)
    for k in range(1, p + 1):
        out[k] = log_V(p, k, prior)
    return out


def _log_rising(x: float, m) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    return gammaln(x + m) - gammaln(x)


def eppf_log(part: Partition, prior: MfmPrior) -> float:
    """log p(B) = log V_p(k) + sum_u log rho^(|B_u|)."""
    return log_V(part.p, part.k, prior) + float(np.sum(_log_rising(prior.rho, part.sizes)))


def sample_partition(prior: MfmPrior, p: int, rng) -> Partition:
    """Draw k* ~ f, weights ~ Dir(rho), labels ~ Mult(weights), partition by ties."""
    if p < 1:
        raise ValueError("p must be >= 1")
    gen = as_generator(rng)
    if prior.log_pmf is _poisson1_shifted:
        kstar = 1 + int(gen.poisson(1.0))
    else:
        kstar = _draw_from_log_pmf(prior.log_pmf, gen)
    w = dirichlet_sample(kstar, prior.rho, gen)
    labels = gen.choice(kstar, size=p, p=w)
    return Partition(tuple(int(x) for x in labels))


def _draw_from_log_pmf(log_pmf, gen) -> int:
    u = gen.uniform()
    acc = 0.0
    for k in range(1, _MAX_TERMS):
        acc += math.exp(log_pmf(k))
        if u <= acc:
            return k
    raise ArithmeticError("component-count pmf does not sum to one")


def _contingency(a: Partition, b: Partition) -> np.ndarray:
    if a.p != b.p:
        raise ValueError(f"partitions cover different sizes ({a.p} vs {b.p})")
    table = np.zeros((a.k, b.k))
    np.add.at(table, (a.label_array(), b.label_array()), 1.0)
    return table


def ari(a: Partition, b: Partition) -> float:
    """Adjusted Rand index from the contingency table of block overlaps."""
    m = _contingency(a, b)
    p = a.p
    comb = lambda x: x * (x - 1.0) / 2.0  # noqa: E731
    index = comb(m).sum()
    rows = comb(m.sum(axis=1)).sum()
    cols = comb(m.sum(axis=0)).sum()
    total = comb(float(p))
    if total == 0:
        return 1.0
    expected = rows * cols / total
    top = 0.5 * (rows + cols)
    if top == expected:
        # both partitions trivial (all singletons or one block) in the same way
        return 1.0
    return float((index - expected) / (top - expected))


def coclustering(part: Partition) -> np.ndarray:
    lab = part.label_array()
    return (lab[:, None] == lab[None, :]).astype(float)


def posterior_similarity(trace: Sequence[Partition]) -> np.ndarray:
    """Fraction of partitions in ``trace`` that put each pair in the same block."""
    trace = list(trace)
    if not trace:
        raise ValueError("posterior similarity needs a non-empty trace")
    p = trace[0].p
    acc = np.zeros((p, p))
    for part in trace:
        if part.p != p:
            raise ValueError("all partitions in the trace must cover the same p")
        acc += coclustering(part)
    return acc / len(trace)


_R2_FLOOR = 1e-300


def r2_loss(psm_estimate, truth: Partition) -> float:
    """-(1/p^2) sum_{ii'} pi0_{ii'} log pihat_{ii'} over true co-memberships.

    Zero estimated probabilities at a true co-membership are clamped to 1e-300
    and a ``RuntimeWarning`` is raised (the loss would otherwise be infinite).
    """
    psm = np.asarray(psm_estimate, dtype=float)
    p = truth.p
    if psm.shape != (p, p):
        raise ValueError(f"psm shape {psm.shape} does not match p={p}")
    mask = coclustering(truth) > 0
    vals = psm[mask]
    if np.any(vals <= 0):
        warnings.warn(
            "zero estimated co-clustering probability at a true co-membership; "
            "R2 clamped (true loss is infinite)",
            RuntimeWarning,
            stacklevel=2,
        )
        vals = np.maximum(vals, _R2_FLOOR)
    return float(-np.sum(np.log(vals)) / p**2)


def recover_partition(sigma, tol: float = 1e-8) -> Partition:
    """Irreducible partition of a group covariance matrix.

    ``i ~ j`` iff ``sigma_ii == sigma_jj`` and ``sigma_il == sigma_jl`` for all
    ``l`` outside ``{i, j}``, with equality tested to absolute tolerance ``tol``.
    """
    S = np.asarray(sigma, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ValueError("sigma must be square")
    if not np.allclose(S, S.T, atol=tol, rtol=0):
        raise ValueError("sigma must be symmetric")
    p = S.shape[0]
    diff = np.abs(S[:, None, :] - S[None, :, :])
    idx = np.arange(p)
    diff[idx[:, None], idx[None, :], idx[:, None]] = 0.0
    diff[idx[:, None], idx[None, :], idx[None, :]] = 0.0
    diag = np.diag(S)
    equiv = (diff.max(axis=2) <= tol) & (np.abs(diag[:, None] - diag[None, :]) <= tol)

    labels = -np.ones(p, dtype=int)
    nxt = 0
    for i in range(p):
        if labels[i] >= 0:
            continue
        stack = [i]
        labels[i] = nxt
        while stack:
            j = stack.pop()
            for m in np.flatnonzero(equiv[j] & (labels < 0)):
                labels[m] = nxt
                stack.append(m)
        nxt += 1
    for lab in range(nxt):
        members = np.flatnonzero(labels == lab)
        if not equiv[np.ix_(members, members)].all():
            raise AmbiguousPartitionError(
                f"tolerance {tol} chains non-equivalent variables {members.tolist()}"
            )
    return Partition(tuple(int(x) for x in labels))
