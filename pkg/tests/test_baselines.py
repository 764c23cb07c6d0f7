import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.covariance import ledoit_wolf

from blockcov import baselines as bl
from blockcov.blockmodel import block_average
from blockcov.dgp import ordered_cov, sample_data
from blockcov.partitions import Partition
from blockcov.randgen import RandomStream


def _S(p=6, seed=0):
    rng = np.random.default_rng(seed)
    Y = rng.standard_normal((30, p)) @ rng.standard_normal((p, p))
    return Y, bl.sample_cov(Y)


def test_sample_cov_uncentered_and_centered():
    Y = np.array([[1.0, 2.0], [3.0, 4.0]])
    assert np.allclose(bl.sample_cov(Y), Y.T @ Y / 2)
    assert np.allclose(bl.sample_cov(Y, center=True), np.cov(Y.T, bias=True))


def test_banding_keeps_lags_up_to_bandwidth():
    _, S = _S()
    B = bl.banding(S, 1)
    assert B[0, 1] == S[0, 1] and B[0, 2] == 0.0 and np.all(np.diag(B) == np.diag(S))
    assert np.array_equal(bl.banding(S, 10), S)
    with pytest.raises(ValueError):
        bl.banding(S, -1)


def test_tapering_weights():
    S = np.ones((6, 6))
    T = bl.tapering(S, 4)
    assert T[0, 2] == 1.0 and T[0, 3] == pytest.approx(0.5) and T[0, 4] == 0.0
    assert np.array_equal(bl.tapering(S, 0), np.eye(6))


def test_hard_threshold_keeps_diagonal():
    S = np.array([[0.1, 0.5, -0.05], [0.5, 0.2, 0.3], [-0.05, 0.3, 0.01]])
    T = bl.hard_threshold(S, 0.4)
    assert np.array_equal(np.diag(T), np.diag(S))
    assert T[0, 1] == 0.5 and T[1, 2] == 0.0 and T[0, 2] == 0.0


@pytest.mark.parametrize("seed", range(5))
def test_lw_linear_matches_sklearn(seed):
    Y, _ = _S(8, seed)
    ref, shrink = ledoit_wolf(Y, assume_centered=True)
    ours, mu = bl.lw_intensity(Y)
    assert ours == pytest.approx(shrink, rel=1e-10)
    assert np.allclose(bl.lw_linear(Y), ref, atol=1e-10)


def test_lw_identity_data_has_zero_deviation():
    shrink, mu = bl.lw_intensity(np.array([[1.0, 0.0], [0.0, 1.0]]) * np.sqrt(2))
    assert shrink == 0.0 and mu == pytest.approx(1.0)


def test_fsopt_is_frobenius_optimal_given_eigenvectors():
    Y, S = _S(5, 1)
    sigma = ordered_cov("ar1", 5, rho=0.6)
    best = np.linalg.norm(bl.fsopt_oracle(S, sigma) - sigma)
    _, U = np.linalg.eigh(S)
    rng = np.random.default_rng(2)
    d = np.diag(U.T @ sigma @ U)
    for _ in range(50):
        other = (U * (d + 0.05 * rng.standard_normal(5))) @ U.T
        assert np.linalg.norm(other - sigma) >= best - 1e-12
    assert best <= np.linalg.norm(bl.stein_plugin_oracle(S, sigma) - sigma) + 1e-12


def test_stein_plugin_has_population_spectrum():
    _, S = _S(5, 3)
    sigma = ordered_cov("ma1", 5)
    est = bl.stein_plugin_oracle(S, sigma)
    assert np.allclose(np.linalg.eigvalsh(est), np.linalg.eigvalsh(sigma))


def test_known_blocks_is_block_average():
    _, S = _S(6, 4)
    part = Partition((1, 1, 2, 2, 3, 3))
    assert np.array_equal(bl.known_blocks_mle(S, part), block_average(S, part))


def test_frobenius_ratio_values_and_degenerate_case():
    sigma = np.eye(2)
    S = np.array([[2.0, 0.0], [0.0, 1.0]])
    assert bl.frobenius_ratio(sigma, S, sigma) == 0.0
    assert bl.frobenius_ratio(S, S, sigma) == 1.0
    with pytest.warns(RuntimeWarning):
        assert bl.frobenius_ratio(S, sigma, sigma) == math.inf


def test_cv_tune_prefers_narrow_band_for_ma1():
    sigma = ordered_cov("ma1", 30, rho=0.5)
    Y = sample_data(sigma, 200, RandomStream(5))
    grid = bl.default_grid("banding", bl.sample_cov(Y))
    assert bl.cv_tune("banding", Y, grid, 5, RandomStream(6)) <= 2


def test_cv_tune_ties_go_to_first_grid_value():
    Y = np.random.default_rng(7).standard_normal((20, 4))
    # bandwidths beyond p - 1 all reproduce S, so the losses tie
    assert bl.cv_tune("banding", Y, [5, 6, 7], 4, 0) == 5


def test_cv_tune_validation():
    Y = np.ones((10, 3))
    with pytest.raises(ValueError):
        bl.cv_tune("banding", Y, [], 5)
    with pytest.raises(ValueError):
        bl.cv_tune("lw_linear", Y, [1, 2], 5)
    with pytest.raises(ValueError):
        bl.cv_tune("banding", Y[:3], [1, 2], 5)
    assert bl.cv_tune("banding", Y, [3], 5) == 3


def test_default_grids():
    _, S = _S(5, 8)
    assert list(bl.default_grid("tapering", S)) == [0, 1, 2, 3, 4]
    g = bl.default_grid("threshold", S)
    assert g[0] == 0.0 and g[-1] == pytest.approx(np.abs(S - np.diag(np.diag(S))).max())
    with pytest.raises(ValueError):
        bl.default_grid("sample", S)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 12), st.integers(2, 40), st.integers(0, 2**31))
def test_estimators_symmetric_and_lw_pd(p, n, seed):
    Y = np.random.default_rng(seed).standard_normal((n, p))
    S = bl.sample_cov(Y)
    for est in (bl.banding(S, 1), bl.tapering(S, 3), bl.hard_threshold(S, 0.2), bl.lw_linear(Y)):
        assert np.allclose(est, est.T)
    shrink, _ = bl.lw_intensity(Y)
    assert 0.0 <= shrink <= 1.0
    if shrink > 0:
        assert bl.is_pd(bl.lw_linear(Y))
