import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from blockcov.dgp import (
    KINDS,
    ScenarioSpec,
    block_sparse,
    build_sigma,
    eigen_based,
    factor_based,
    factor_partition,
    grouped_random,
    grouping_labels,
    ordered_cov,
    random_iw,
    sample_data,
)
from blockcov.partitions import recover_partition
from blockcov.randgen import RandomStream


def test_ma1_and_ar1_entries():
    ma = ordered_cov("ma1", 5, rho=0.5)
    assert ma[0, 1] == 0.5 and ma[0, 2] == 0.0 and ma[3, 3] == 1.0
    ar = ordered_cov("ar1", 5, rho=0.5)
    assert ar[0, 3] == pytest.approx(0.125)


def test_longrange_is_fgn_autocovariance():
    L = ordered_cov("longrange", 6, H=0.7)
    h = 1.4
    assert L[0, 0] == pytest.approx(1.0)
    assert L[0, 2] == pytest.approx(0.5 * (3**h - 2 * 2**h + 1))


def test_toeplitz_diagonal_and_decay():
    T = ordered_cov("toeplitz", 6, rho=0.5, alpha=0.3)
    assert np.all(np.diag(T) == 1.0)
    assert T[0, 2] == pytest.approx(0.5 * 2 ** (-1.3))


@pytest.mark.parametrize("kind", ["ma1", "ar1", "longrange", "toeplitz"])
def test_ordered_kinds_are_pd(kind):
    assert np.linalg.eigvalsh(ordered_cov(kind, 50)).min() > 0


def test_grouping_label_probabilities():
    lab = grouping_labels(200_000, 5, 1)
    w = np.maximum(0.1, 0.7 ** np.arange(1, 6))
    freq = np.bincount(lab, minlength=5) / lab.size
    assert np.allclose(freq, w / w.sum(), atol=0.005)


def test_grouped_random_is_group_covariance_of_truth():
    part, sigma = grouped_random(20, 5, 10.0, (0.5, 0.2, 0.3), RandomStream(3))
    assert recover_partition(sigma, tol=1e-10) == part
    assert np.linalg.eigvalsh(sigma).min() > 0


def test_grouped_random_large_tau_is_near_homogeneous():
    part, sigma = grouped_random(30, 3, 1e6, (0.5, 0.2, 0.3), RandomStream(4))
    assert np.allclose(np.diag(sigma), 1.0, atol=0.02)
    lab = part.label_array()
    off_between = sigma[lab[:, None] != lab[None, :]]
    assert np.allclose(off_between, 0.2, atol=0.02)


def test_grouped_random_rejects_bad_deltas():
    with pytest.raises(ValueError):
        grouped_random(10, 2, 1.0, (0.0, 0.2, 0.3), 0)


def test_factor_model_covariance():
    sigma = factor_based(50)
    part = factor_partition(50)
    assert part.sizes == (20, 20, 10)
    assert sigma[0, 0] == pytest.approx(291.0)
    assert sigma[0, 1] == pytest.approx(290.0)
    assert sigma[0, 20] == pytest.approx(0.0)
    assert sigma[0, 45] == pytest.approx(-87.0)
    assert sigma[25, 45] == pytest.approx(0.925 * 300)
    assert sigma[45, 45] == pytest.approx(0.09 * 290 + 0.925**2 * 300 + 1 + 1)


def test_factor_covariance_matches_simulated_factors():
    rng = np.random.default_rng(5)
    m = 400_000
    f1 = rng.normal(0, np.sqrt(290), m)
    f2 = rng.normal(0, np.sqrt(300), m)
    f3 = -0.3 * f1 + 0.925 * f2 + rng.standard_normal(m)
    F = np.cov(np.vstack([f1, f2, f3]))
    sigma = factor_based(10)
    lab = factor_partition(10).label_array()
    assert np.allclose(F[np.ix_(lab, lab)] + np.eye(10), sigma, rtol=0.02, atol=1.0)


def test_block_sparse_structure():
    banded = block_sparse(20, "banded")
    assert np.allclose(banded[:10, :10], 4 * np.eye(10))
    assert banded[10, 11] == pytest.approx(0.9) and banded[10, 19] == pytest.approx(0.1)
    assert np.all(banded[:10, 10:] == 0)
    ew = block_sparse(20, "entrywise", 3)
    sub = ew[10:, 10:]
    assert np.allclose(sub, sub.T)
    assert np.linalg.eigvalsh(sub).min() >= 0.01 - 1e-9
    with pytest.raises(ValueError):
        block_sparse(7, "banded")


def test_eigen_spectra():
    d = np.sort(np.linalg.eigvalsh(eigen_based(50, "discrete", 1)))
    assert np.allclose(d, np.sort([10.0] * 20 + [3.0] * 20 + [1.0] * 10))
    u = np.linalg.eigvalsh(eigen_based(50, "uniform", 2))
    assert u.min() >= 1.0 - 1e-9 and u.max() <= 10.0 + 1e-9


def test_random_iw_mean_is_center():
    center = np.array([[2.0, 0.5, 0.0], [0.5, 1.0, 0.2], [0.0, 0.2, 1.5]])
    gen = np.random.default_rng(6)
    draws = np.array([random_iw(3, gen, sigma_ig=center) for _ in range(40_000)])
    assert np.allclose(draws.mean(axis=0), center, atol=0.1)


@pytest.mark.parametrize("kind", KINDS)
def test_every_kind_builds_pd_sigma(kind):
    spec = ScenarioSpec(kind, p=20, n=10)
    scen = build_sigma(spec, RandomStream(1, (kind,)))
    assert scen.sigma.shape == (20, 20)
    assert np.linalg.eigvalsh(scen.sigma).min() > -1e-9
    if kind in ("grouped", "factor"):
        assert scen.truth is not None and scen.truth.p == 20


def test_scenario_validation_and_echo():
    with pytest.raises(ValueError):
        ScenarioSpec("nope")
    with pytest.raises(ValueError):
        ScenarioSpec("blocksparse_banded", p=9)
    echo = ScenarioSpec("grouped", p=25).echo()
    assert echo["kstar"] == 5 and echo["deltas"] == [0.5, 0.2, 0.3]


def test_sample_data_shape_and_determinism():
    a = sample_data(np.eye(3), 7, RandomStream(2, (1,)))
    b = sample_data(np.eye(3), 7, RandomStream(2, (1,)))
    assert a.shape == (7, 3) and np.array_equal(a, b)


@settings(max_examples=15, deadline=None)
@given(st.integers(2, 25), st.integers(1, 6), st.floats(0.5, 200.0), st.integers(0, 2**31))
def test_grouped_random_property(p, kstar, tau, seed):
    part, sigma = grouped_random(p, kstar, tau, (0.5, 0.1, 0.2), seed)
    assert part.k <= kstar
    assert np.allclose(sigma, sigma.T)
    assert np.linalg.eigvalsh(sigma).min() > 0
