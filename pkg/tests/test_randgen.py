import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from blockcov.randgen import (
    RandomStream,
    as_generator,
    cauchy_sample,
    dirichlet_sample,
    gamma_sample,
    inverse_gamma_sample,
    inverse_wishart_sample,
    mvn_sample,
)

ALPHA = 1e-3
N = 100_000


def ks_ok(x, cdf, *args):
    return stats.kstest(x, cdf, args=args).pvalue > ALPHA


def test_stream_is_pure_function_of_seed_and_path():
    a = RandomStream(11, (2, "data")).generator.random(5)
    b = RandomStream(11, (2, "data")).generator.random(5)
    c = RandomStream(11, (3, "data")).generator.random(5)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_child_matches_explicit_path():
    root = RandomStream(5, (1,))
    x = root.child(4, "chain").generator.integers(0, 2**32, size=3)
    y = RandomStream(5, (1, 4, "chain")).generator.integers(0, 2**32, size=3)
    assert np.array_equal(x, y)


def test_negative_key_rejected():
    with pytest.raises(ValueError):
        RandomStream(0, (-1,))


def test_as_generator_accepts_all_forms():
    g = np.random.default_rng(1)
    assert as_generator(g) is g
    assert isinstance(as_generator(3), np.random.Generator)
    s = RandomStream(3)
    assert as_generator(s) is s.generator


def test_mvn_projection_ks():
    rng = np.random.default_rng(0)
    B = rng.standard_normal((4, 4))
    sigma = B @ B.T + np.eye(4)
    Y = mvn_sample(sigma, RandomStream(1), size=N)
    a = np.array([0.3, -1.0, 0.5, 2.0])
    sd = np.sqrt(a @ sigma @ a)
    assert ks_ok(Y @ a, "norm", 0.0, sd)
    assert np.allclose(np.cov(Y.T, bias=True), sigma, atol=0.05 * np.abs(sigma).max())


def test_mvn_singular_covariance():
    v = np.array([1.0, 2.0, -1.0])
    sigma = np.outer(v, v)
    Y = mvn_sample(sigma, 4, size=1000)
    # every draw lies on the span of v
    resid = Y - np.outer(Y @ v / (v @ v), v)
    assert np.abs(resid).max() < 1e-8


def test_mvn_rejects_indefinite():
    with pytest.raises(ValueError, match="positive semidefinite"):
        mvn_sample(np.array([[1.0, 2.0], [2.0, 1.0]]), 0, size=3)


def test_inverse_wishart_marginal_ks_and_mean():
    df, k = 7.0, 3
    scale = np.array([[2.0, 0.3, 0.1], [0.3, 1.0, -0.2], [0.1, -0.2, 1.5]])
    X = inverse_wishart_sample(df, scale, RandomStream(2), size=N)
    # a diagonal entry of an inverse Wishart is inverse gamma((df - k + 1)/2, scale_ii/2)
    shape = (df - k + 1) / 2
    for i in range(k):
        assert ks_ok(X[:, i, i], "invgamma", shape, 0.0, scale[i, i] / 2)
    mean = X.mean(axis=0)
    assert np.allclose(mean, scale / (df - k - 1), atol=0.05)


def test_inverse_wishart_matches_scipy_distribution():
    df = 9.0
    scale = np.array([[1.0, 0.4], [0.4, 2.0]])
    X = inverse_wishart_sample(df, scale, 3, size=20_000)
    ref = stats.invwishart(df, scale).rvs(size=20_000, random_state=4)
    # compare an off-diagonal functional by two-sample KS
    assert stats.ks_2samp(X[:, 0, 1], ref[:, 0, 1]).pvalue > ALPHA


def test_inverse_wishart_errors():
    with pytest.raises(ValueError):
        inverse_wishart_sample(0.5, np.eye(2), 0)
    with pytest.raises(ValueError):
        inverse_wishart_sample(5.0, -np.eye(2), 0)


def test_inverse_gamma_ks():
    x = inverse_gamma_sample(3.0, 2.0, RandomStream(3), size=N)
    assert ks_ok(x, "invgamma", 3.0, 0.0, 2.0)


def test_gamma_ks_and_mean():
    x = gamma_sample(2.0, 4.0, RandomStream(4), size=N)
    assert ks_ok(x, "gamma", 2.0, 0.0, 0.25)
    se = np.sqrt(2.0 / 16.0 / N)
    assert abs(x.mean() - 0.5) < 3 * se


def test_dirichlet_marginal_ks():
    gen = RandomStream(5).generator
    k, rho = 4, 0.7
    w = np.array([dirichlet_sample(k, rho, gen) for _ in range(N // 4)])
    assert np.allclose(w.sum(axis=1), 1.0)
    assert ks_ok(w[:, 0], "beta", rho, (k - 1) * rho)


def test_dirichlet_tiny_concentration_stays_on_simplex():
    w = dirichlet_sample(6, 1e-4, 0)
    assert np.all(np.isfinite(w)) and abs(w.sum() - 1.0) < 1e-12


def test_cauchy_ks_and_median():
    x = cauchy_sample(1.5, 2.0, RandomStream(6), size=N)
    assert ks_ok(x, "cauchy", 1.5, 2.0)
    assert abs(np.median(x) - 1.5) < 0.05


@pytest.mark.parametrize("fn", [inverse_gamma_sample, gamma_sample])
def test_positive_parameters_required(fn):
    with pytest.raises(ValueError):
        fn(0.0, 1.0, 0)
    with pytest.raises(ValueError):
        fn(1.0, -1.0, 0)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 6), st.floats(0.01, 50.0), st.integers(0, 2**31))
def test_dirichlet_on_simplex(k, rho, seed):
    w = dirichlet_sample(k, rho, seed)
    assert w.shape == (k,)
    assert np.all(w >= 0) and abs(w.sum() - 1) < 1e-9


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 5), st.floats(0.0, 10.0), st.integers(0, 2**31))
def test_inverse_wishart_draws_are_spd(k, extra, seed):
    X = inverse_wishart_sample(k + 1.0 + extra, np.eye(k), seed)
    assert np.allclose(X, X.T)
    assert np.linalg.eigvalsh(X).min() > 0
