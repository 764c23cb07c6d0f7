"""Block covariance algebra: parameter forms, the rotation Q, expansion and the MLE."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .partitions import Partition

__all__ = [
    "BlockParams",
    "CanonicalParams",
    "RotationQ",
    "helmert_block",
    "build_Q",
    "to_canonical",
    "from_canonical",
    "expand",
    "expand_canonical",
    "is_psd",
    "mle_given_partition",
    "block_average",
]


def _sizes(sizes) -> tuple[int, ...]:
    out = tuple(int(s) for s in sizes)
    if not out or min(out) < 1:
        raise ValueError(f"block sizes must be positive, got {out}")
    return out


@dataclass(frozen=True)
class BlockParams:
    """Unique entries of a block covariance matrix.

    ``between`` is stored as a full symmetric k x k array; its diagonal is ignored.
    ``within`` is meaningless for singleton blocks and conventionally 0 there.
    """

    sizes: tuple[int, ...]
    var: np.ndarray
    within: np.ndarray
    between: np.ndarray

    def __post_init__(self) -> None:
        sizes = _sizes(self.sizes)
        k = len(sizes)
        var = np.asarray(self.var, dtype=float).reshape(-1)
        within = np.asarray(self.within, dtype=float).reshape(-1)
        between = np.asarray(self.between, dtype=float)
        if between.ndim == 1 and between.size == k * (k - 1) // 2:
            full = np.zeros((k, k))
            full[np.triu_indices(k, 1)] = between
            between = full + full.T
        between = np.atleast_2d(between) if k > 0 else between
        if var.shape != (k,) or within.shape != (k,) or between.shape != (k, k):
            raise ValueError("BlockParams field shapes do not match the block count")
        off = ~np.eye(k, dtype=bool)
        if not np.allclose(between[off], between.T[off], rtol=0, atol=1e-12):
            raise ValueError("between-block covariances must be symmetric")
        between = between.copy()
        np.fill_diagonal(between, 0.0)
        object.__setattr__(self, "sizes", sizes)
        object.__setattr__(self, "var", var)
        object.__setattr__(self, "within", within)
        object.__setattr__(self, "between", between)

    @property
    def k(self) -> int:
        return len(self.sizes)


@dataclass(frozen=True)
class CanonicalParams:
    """Rotated form (A, lambda); lambda_u = 0 is a placeholder for singleton blocks."""

    A: np.ndarray
    lam: np.ndarray

    def __post_init__(self) -> None:
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        lam = np.asarray(self.lam, dtype=float).reshape(-1)
        if A.shape != (lam.size, lam.size):
            raise ValueError(f"A has shape {A.shape} but there are {lam.size} blocks")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "lam", lam)

    @property
    def k(self) -> int:
        return self.lam.size


def helmert_block(m: int) -> np.ndarray:
    """Orthonormal m x m matrix: first column 1/sqrt(m), then scaled Helmert contrasts.

    Contrast i (i = 1..m-1) has ones in rows 1..i-1, -i in row i, zeros below and
    a one in the last row, scaled by 1/sqrt(i + i^2).
    """
    m = int(m)
    if m < 1:
        raise ValueError("block size must be positive")
    H = np.zeros((m, m))
    H[:, 0] = 1.0 / np.sqrt(m)
    for i in range(1, m):
        col = np.zeros(m)
        col[: i - 1] = 1.0
        col[i - 1] = -float(i)
        col[m - 1] = 1.0
        H[:, i] = col / np.sqrt(i + i * i)
    return H


@dataclass(frozen=True)
class RotationQ:
    """Semi-spectral rotation for a given partition.

    Columns 0..k-1 are the scaled block indicators; the remaining columns are the
    within-block contrasts, grouped block by block in block order.
    """

    Q: np.ndarray
    sizes: tuple[int, ...]

    def contrast_columns(self, u: int) -> slice:
        k = len(self.sizes)
        start = k + sum(s - 1 for s in self.sizes[:u])
        return slice(start, start + self.sizes[u] - 1)


def build_Q(sizes_or_partition) -> RotationQ:
    """Rotation Q for block sizes (contiguous layout) or for a Partition (original order)."""
    if isinstance(sizes_or_partition, Partition):
        blocks = sizes_or_partition.blocks
    else:
        sizes = _sizes(sizes_or_partition)
        offsets = np.concatenate([[0], np.cumsum(sizes)])
        blocks = tuple(tuple(range(offsets[u], offsets[u + 1])) for u in range(len(sizes)))
    sizes = tuple(len(b) for b in blocks)
    p, k = sum(sizes), len(sizes)
    Q = np.zeros((p, p))
    col = k
    for u, members in enumerate(blocks):
        H = helmert_block(len(members))
        rows = np.asarray(members)
        Q[rows, u] = H[:, 0]
        if len(members) > 1:
            Q[np.ix_(rows, np.arange(col, col + len(members) - 1))] = H[:, 1:]
            col += len(members) - 1
    return RotationQ(Q, sizes)


def to_canonical(bp: BlockParams) -> CanonicalParams:
    p = np.asarray(bp.sizes, dtype=float)
    single = p == 1
    root = np.sqrt(p)
    A = bp.between * np.outer(root, root)
    np.fill_diagonal(A, bp.var + (p - 1.0) * bp.within)
    lam = np.where(single, 0.0, bp.var - bp.within)
    return CanonicalParams(A, lam)


def from_canonical(cp: CanonicalParams, sizes) -> BlockParams:
    sizes = _sizes(sizes)
    if len(sizes) != cp.k:
        raise ValueError(f"{len(sizes)} block sizes for {cp.k} canonical blocks")
    p = np.asarray(sizes, dtype=float)
    single = p == 1
    a = np.diag(cp.A)
    lam = np.where(single, 0.0, cp.lam)
    var = (a + (p - 1.0) * lam) / p
    within = np.where(single, 0.0, (a - lam) / p)
    between = cp.A / np.sqrt(np.outer(p, p))
    return BlockParams(sizes, var, within, 0.5 * (between + between.T))


def expand(bp: BlockParams, part: Partition) -> np.ndarray:
    if tuple(part.sizes) != tuple(bp.sizes):
        raise ValueError(f"partition sizes {part.sizes} do not match parameters {bp.sizes}")
    lab = part.label_array()
    sigma = bp.between[np.ix_(lab, lab)].copy()
    same = lab[:, None] == lab[None, :]
    sigma[same] = bp.within[lab[np.nonzero(same)[0]]]
    sigma[np.diag_indices(part.p)] = bp.var[lab]
    return sigma


def expand_canonical(cp: CanonicalParams, part: Partition) -> np.ndarray:
    return expand(from_canonical(cp, part.sizes), part)


def is_psd(cp: CanonicalParams, tol: float = 1e-10) -> bool:
    A = 0.5 * (cp.A + cp.A.T)
    if A.size and np.linalg.eigvalsh(A).min() < -tol:
        return False
    return bool(np.all(cp.lam >= -tol))


def mle_given_partition(Y, part: Partition) -> tuple[CanonicalParams, np.ndarray]:
    """MLE of (A, lambda) via the explicit rotation eta_i = Q' y_i, and Q D Q'."""
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    n, p = Y.shape
    if n < 1 or p != part.p:
        raise ValueError(f"data of shape {Y.shape} incompatible with partition of p={part.p}")
    rot = build_Q(part)
    eta = Y @ rot.Q
    k = part.k
    A = eta[:, :k].T @ eta[:, :k] / n
    lam = np.zeros(k)
    D = np.zeros((p, p))
    D[:k, :k] = A
    for u, m in enumerate(part.sizes):
        if m > 1:
            cols = rot.contrast_columns(u)
            lam[u] = np.sum(eta[:, cols] ** 2) / (n * (m - 1))
            idx = np.arange(cols.start, cols.stop)
            D[idx, idx] = lam[u]
    sigma = rot.Q @ D @ rot.Q.T
    return CanonicalParams(A, lam), 0.5 * (sigma + sigma.T)


def block_average(S, part: Partition) -> np.ndarray:
    """Average S over the diagonal, within-block off-diagonal, and cross-block cells."""
    S = np.asarray(S, dtype=float)
    out = np.empty_like(S)
    blocks = [np.asarray(b) for b in part.blocks]
    for u, bu in enumerate(blocks):
        sub = S[np.ix_(bu, bu)]
        diag_mean = np.trace(sub) / bu.size
        if bu.size > 1:
            off_mean = (sub.sum() - np.trace(sub)) / (bu.size * (bu.size - 1))
        else:
            off_mean = 0.0
        out[np.ix_(bu, bu)] = off_mean
        out[bu, bu] = diag_mean
        for v in range(u + 1, len(blocks)):
            bv = blocks[v]
            val = S[np.ix_(bu, bv)].mean()
            out[np.ix_(bu, bv)] = val
            out[np.ix_(bv, bu)] = val
    return out
