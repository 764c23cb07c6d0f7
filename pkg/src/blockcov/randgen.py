"""Seed-reproducible random streams and the variate generators used across the package."""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "RandomStream",
    "as_generator",
    "mvn_sample",
    "inverse_wishart_sample",
    "inverse_gamma_sample",
    "gamma_sample",
    "dirichlet_sample",
    "cauchy_sample",
]


def _key(part: int | str) -> int:
    if isinstance(part, (int, np.integer)):
        if part < 0:
            raise ValueError("stream keys must be non-negative")
        return int(part)
    return zlib.crc32(str(part).encode("utf-8"))


@dataclass
class RandomStream:
    """A single-owner generator whose state is a pure function of ``(seed, path)``.

    Children are derived with :meth:`child`; the lineage path is hashed into the
    ``SeedSequence`` spawn key, so replicate ``r`` of experiment ``e`` gets the same
    numbers no matter in which order (or in which process) the replicates run.
    """

    seed: int
    path: tuple[int, ...] = ()
    generator: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.seed = int(self.seed)
        self.path = tuple(_key(p) for p in self.path)
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=self.path)
        self.generator = np.random.Generator(np.random.PCG64(ss))

    def child(self, *keys: int | str) -> "RandomStream":
        return RandomStream(self.seed, self.path + tuple(_key(k) for k in keys))


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, RandomStream):
        return rng.generator
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def _psd_factor(sigma: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError:
        pass
    w, v = np.linalg.eigh(sigma)
    scale = max(1.0, float(np.max(np.abs(w))) if w.size else 1.0)
    if w.size and w.min() < -1e-10 * scale:
        # one retry with the 1e-10 jitter before giving up
        try:
            return np.linalg.cholesky(sigma + 1e-10 * scale * np.eye(sigma.shape[0]))
        except np.linalg.LinAlgError:
            raise ValueError(
                f"covariance is not positive semidefinite (min eigenvalue {w.min():.3e})"
            ) from None
    # eigenvalues at rounding level are treated as exact zeros
    w = np.where(w < 1e-12 * scale, 0.0, w)
    return v * np.sqrt(w)


def mvn_sample(sigma, rng, size: int | None = None) -> np.ndarray:
    """Draw from N(0, sigma); ``size`` rows if given, else one vector."""
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    gen = as_generator(rng)
    factor = _psd_factor(sigma)
    p = sigma.shape[0]
    if size is None:
        return factor @ gen.standard_normal(p)
    return gen.standard_normal((size, p)) @ factor.T


def inverse_wishart_sample(df: float, scale, rng, size: int | None = None) -> np.ndarray:
    """Inverse-Wishart draw with E[X] = scale / (df - k - 1).

    Bartlett decomposition of the Wishart(df, scale^{-1}) precision, then inverted.
    """
    scale = np.atleast_2d(np.asarray(scale, dtype=float))
    k = scale.shape[0]
    if df <= k - 1:
        raise ValueError(f"degrees of freedom {df} must exceed k - 1 = {k - 1}")
    try:
        chol_scale = np.linalg.cholesky(scale)
    except np.linalg.LinAlgError:
        raise ValueError("inverse-Wishart scale must be positive definite") from None
    gen = as_generator(rng)
    m = 1 if size is None else int(size)
    T = np.zeros((m, k, k))
    rows, cols = np.tril_indices(k, -1)
    T[:, rows, cols] = gen.standard_normal((m, rows.size))
    idx = np.arange(k)
    T[:, idx, idx] = np.sqrt(gen.chisquare(df - idx, size=(m, k)))
    # precision W = L^{-T} T T' L^{-1} with scale = L L'; so X = W^{-1} = L T^{-T} T^{-1} L'
    Tinv = np.linalg.inv(T)
    R = chol_scale @ np.swapaxes(Tinv, -1, -2)
    X = R @ np.swapaxes(R, -1, -2)
    X = 0.5 * (X + np.swapaxes(X, -1, -2))
    return X[0] if size is None else X


def inverse_gamma_sample(shape: float, rate: float, rng, size=None):
    if shape <= 0 or rate <= 0:
        raise ValueError("inverse-gamma shape and rate must be positive")
    return rate / as_generator(rng).gamma(shape, 1.0, size=size)


def gamma_sample(shape: float, rate: float, rng, size=None):
    if shape <= 0 or rate <= 0:
        raise ValueError("gamma shape and rate must be positive")
    return as_generator(rng).gamma(shape, 1.0 / rate, size=size)


def dirichlet_sample(k: int, rho: float, rng) -> np.ndarray:
    if k < 1 or rho <= 0:
        raise ValueError("Dirichlet needs k >= 1 and rho > 0")
    gen = as_generator(rng)
    w = gen.dirichlet(np.full(k, float(rho)))
    if not np.all(np.isfinite(w)) or w.sum() <= 0:
        # tiny concentrations can underflow every component; fall back to log-gamma draws
        logg = np.log(gen.uniform(size=k)) / rho + np.log(gen.gamma(rho + 1.0, size=k))
        logg -= logg.max()
        w = np.exp(logg)
        w /= w.sum()
    return w


def cauchy_sample(loc: float, scale: float, rng, size=None):
    return loc + scale * as_generator(rng).standard_cauchy(size=size)
