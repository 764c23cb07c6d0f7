import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from blockcov import _kernels
from blockcov.inference import (
    Hyperparams,
    PriorSpec,
    gram,
    kernel_params,
    log_marginal_likelihood,
    median_variance,
    sufficient_stats,
)
from blockcov.partitions import MfmPrior, Partition, eppf_log, log_V_table, set_partitions
from blockcov.sampler import (
    AdaptiveMetropolis,
    ChainConfig,
    ChainState,
    NumericalFailure,
    _Data,
    estimate,
    make_prior,
    run_chain,
    sams_move,
    theta_to_x,
    update_theta_am,
    x_to_theta,
)


def toy_data(p, n, seed):
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n, 1))
    Y = 0.8 * rng.standard_normal((n, p))
    Y[:, : (p + 1) // 2] += z
    return Y


def exact_posterior(Y, config):
    n, p = Y.shape
    G = gram(Y)
    spec = make_prior(config, median_variance(G, n))
    parts = list(set_partitions(p))
    logp = np.array([
        log_marginal_likelihood(sufficient_stats(G, n, b), spec) + eppf_log(b, MfmPrior(config.rho))
        for b in parts
    ])
    w = np.exp(logp - logp.max())
    return parts, w / w.sum()


def frequencies(out, parts):
    counts = dict.fromkeys(parts, 0)
    for b in out.partition_trace:
        counts[b] += 1
    m = len(out.partition_trace)
    return np.array([counts[b] / m for b in parts]), m


SCHEDULES = {
    "gibbs": dict(gibbs=True, sams_repeats=0),
    "sams": dict(gibbs=False, sams_repeats=1),
    "mixed": dict(gibbs=True, sams_repeats=5),
}


@pytest.mark.parametrize("schedule", sorted(SCHEDULES))
def test_sampler_matches_enumeration_p3(schedule):
    Y = toy_data(3, 6, 1)
    cfg = ChainConfig(iterations=20_500, burnin=500, thin=1, prior="weak", seed=3,
                      check_every=0, **SCHEDULES[schedule])
    parts, prob = exact_posterior(Y, cfg)
    freq, m = frequencies(run_chain(Y, cfg), parts)
    se = np.sqrt(prob * (1 - prob) / m)
    assert np.all(np.abs(freq - prob) <= 4 * se + 1e-12), (freq, prob)


def test_hierarchical_fixed_theta_matches_enumeration():
    Y = toy_data(3, 5, 2)
    th = Hyperparams(3.0, 2.0, 0.6, 0.2, 0.3)
    cfg = ChainConfig(iterations=20_500, burnin=500, thin=1, prior="hierarchical", theta0=th,
                      update_theta=False, seed=5, check_every=0)
    parts, prob = exact_posterior(Y, cfg)
    freq, m = frequencies(run_chain(Y, cfg), parts)
    se = np.sqrt(prob * (1 - prob) / m)
    assert np.all(np.abs(freq - prob) <= 4 * se + 1e-12)


def test_run_chain_is_deterministic():
    Y = toy_data(6, 10, 4)
    cfg = ChainConfig(iterations=120, burnin=20, thin=2, seed=17)
    a, b = run_chain(Y, cfg), run_chain(Y, cfg)
    assert a.partition_trace == b.partition_trace
    assert np.array_equal(a.sigma_mean, b.sigma_mean)
    assert np.array_equal(a.theta_trace, b.theta_trace)
    assert np.array_equal(a.k_trace, b.k_trace)
    c = run_chain(Y, replace(cfg, seed=18))
    assert not np.array_equal(a.theta_trace, c.theta_trace)


def test_chain_output_invariants():
    Y = toy_data(7, 12, 5)
    out = run_chain(Y, ChainConfig(iterations=200, burnin=50, thin=5, seed=1))
    assert len(out.partition_trace) == 30
    assert np.array_equal(out.retained_iterations, np.arange(55, 201, 5))
    assert np.allclose(out.sigma_mean, out.sigma_mean.T)
    assert np.all(np.diag(out.psm) == 1.0)
    assert out.psm.min() >= 0 and out.psm.max() <= 1
    assert np.linalg.eigvalsh(out.sigma_mean).min() > 0
    sigma, part, psm, diag = estimate(out)
    assert part in out.partition_trace
    assert diag["retained"] == 30
    assert np.isfinite(out.log_marg_trace).all()


def test_init_labels_and_gram_input():
    Y = toy_data(5, 9, 6)
    cfg = ChainConfig(iterations=30, burnin=0, thin=1, prior="ck", seed=2)
    a = run_chain(Y, cfg, init_labels=[1, 2, 3, 4, 5])
    b = run_chain(None, cfg, G=gram(Y), n=9, init_labels=[1, 2, 3, 4, 5])
    assert a.partition_trace == b.partition_trace


def test_g_prior_chain_runs_and_traces_nan_theta():
    Y = toy_data(5, 12, 7)
    out = run_chain(Y, ChainConfig(iterations=40, burnin=10, thin=1, prior="g", seed=1))
    assert np.isnan(out.theta_trace[:, 1]).all()


def test_config_validation():
    with pytest.raises(ValueError):
        ChainConfig(iterations=10, burnin=10)
    with pytest.raises(ValueError):
        ChainConfig(thin=0)
    with pytest.raises(ValueError):
        ChainConfig(prior="flat")


def test_sams_rejection_leaves_state_unchanged_and_stats_consistent():
    Y = toy_data(6, 8, 8)
    data = _Data(Y)
    spec = PriorSpec.weak(data.tau0)
    logV = log_V_table(6, MfmPrior())
    state = ChainState(np.zeros(6, dtype=np.int64), 1, spec)
    gen = np.random.default_rng(0)
    seen_reject = seen_accept = False
    for _ in range(300):
        before = state.labels.copy()
        state, acc, _ = sams_move(state, data, logV, 1.0, gen)
        if not acc:
            assert np.array_equal(before, state.labels)
            seen_reject = True
        else:
            seen_accept = True
        assert state.k == len(np.unique(state.labels)) == state.labels.max() + 1
    assert seen_reject and seen_accept


def test_split_then_merge_restores_partition():
    # p = 2: the only moves are splitting {0,1} and merging {0},{1}
    Y = toy_data(2, 4, 9)
    data = _Data(Y)
    spec = PriorSpec.weak(data.tau0)
    logV = log_V_table(2, MfmPrior())
    state = ChainState(np.zeros(2, dtype=np.int64), 1, spec)
    gen = np.random.default_rng(3)
    history = []
    for _ in range(200):
        state, acc, split = sams_move(state, data, logV, 1.0, gen)
        history.append((Partition(tuple(state.labels)).labels, acc, split))
    assert {h[0] for h in history} <= {(1, 1), (1, 2)}
    after_split = [i for i, h in enumerate(history[:-1]) if h[1] and h[2]]
    assert after_split, "no split was ever accepted"
    for i in after_split:
        nxt = history[i + 1]
        assert not nxt[2]  # from singletons the only proposal is a merge
        if nxt[1]:
            assert nxt[0] == (1, 1)


def test_kernel_log_ml_matches_python_path():
    Y = toy_data(6, 7, 10)
    G = gram(Y)
    part = Partition((1, 2, 1, 3, 2, 2))
    spec = PriorSpec.hierarchical(Hyperparams(3.3, 1.2, 0.4, 0.1, 0.2))
    C, d, sizes = np.zeros((7, 7)), np.zeros(7), np.zeros(7)
    _kernels.block_stats(G, part.label_array(), part.k, C, d, sizes)
    val = _kernels.log_ml(C, d, sizes, part.k, 7.0, 6.0, kernel_params(spec), np.zeros((3, 7, 7)))
    assert val == pytest.approx(log_marginal_likelihood(sufficient_stats(G, 7, part), spec), rel=1e-12)


# --- adaptive Metropolis ---------------------------------------------------


def test_theta_transform_round_trip():
    th = Hyperparams(2.7, 0.3, 1.1, 0.05, 4.0)
    back = x_to_theta(theta_to_x(th))
    assert np.allclose(back.as_array(), th.as_array())


def _prior_chain(steps, thin, seed, adapt=20_000):
    spec = PriorSpec.hierarchical(Hyperparams.initial(1.0))
    state = ChainState(np.zeros(3, dtype=np.int64), 1, spec)
    am = AdaptiveMetropolis(5, adapt_until=adapt)
    gen = np.random.default_rng(seed)
    out = []
    for t in range(adapt + steps * thin):
        state, _ = update_theta_am(state, am, gen, conditional=lambda th: 0.0)
        if t >= adapt and (t - adapt) % thin == 0:
            out.append(state.theta_x if state.theta_x is not None else theta_to_x(state.spec.theta))
    # draws in the sampler coordinates (log(nu0 - 2), log s0, log deltas)
    return np.array(out), am


@pytest.mark.slow
def test_am_samples_hyperprior_when_conditional_is_flat():
    x, am = _prior_chain(5_000, 20, 11)
    assert stats.kstest(np.exp(x[:, 2]), "gamma", args=(2.0, 0.0, 0.25)).pvalue > 1e-3
    assert stats.kstest(np.exp(x[:, 3]), "gamma", args=(10.0, 0.0, 1.0)).pvalue > 1e-3
    assert not am.degenerate


def test_am_acceptance_converges_on_gaussian_target():
    rng = np.random.default_rng(0)
    B = rng.standard_normal((5, 5))
    prec = np.linalg.inv(B @ B.T + np.eye(5))
    am = AdaptiveMetropolis(5, target_accept=0.234, adapt_until=None)
    x = np.zeros(5)
    acc = []
    for _ in range(40_000):
        x, a = am.step(x, lambda z: -0.5 * z @ prec @ z, rng)
        acc.append(a)
    rate = np.mean(acc[-10_000:])
    assert 0.134 <= rate <= 0.334


def test_am_zero_scale_is_degenerate():
    am = AdaptiveMetropolis(3, init_scale=0.0)
    x = np.ones(3)
    for _ in range(20):
        y, acc = am.step(x, lambda z: 0.0, np.random.default_rng(1))
        assert not acc and np.array_equal(y, x)
    assert am.degenerate


def test_am_adaptation_freezes_after_burnin():
    am = AdaptiveMetropolis(2, adapt_until=50)
    gen = np.random.default_rng(2)
    x = np.zeros(2)
    for _ in range(50):
        x, _ = am.step(x, lambda z: -0.5 * z @ z, gen)
    frozen = (am.log_scale, am.cov.copy())
    for _ in range(50):
        x, _ = am.step(x, lambda z: -0.5 * z @ z, gen)
    assert am.log_scale == frozen[0] and np.array_equal(am.cov, frozen[1])


def test_theta_x_survives_underflow_of_nu0():
    spec = PriorSpec.hierarchical(Hyperparams(3.0, 1.0, 0.5, 0.5, 0.5))
    state = ChainState(np.zeros(2, dtype=np.int64), 1, spec, theta_x=np.array([-50.0, 0.0, 0.0, 0.0, 0.0]))
    assert state.theta_x is not None
    am = AdaptiveMetropolis(5, init_scale=1e-6)
    gen = np.random.default_rng(8)
    moved = False
    for _ in range(20):
        state, acc = update_theta_am(state, am, gen, conditional=lambda th: 0.0)
        moved |= acc
    assert moved and state.theta_x[0] < -49
    assert state.spec.theta.nu0 == 2.0  # 2 + exp(-50) rounds to 2


def test_out_of_support_proposals_rejected():
    spec = PriorSpec.hierarchical(Hyperparams(3.0, 1.0, 0.5, 0.5, 0.5))
    state = ChainState(np.zeros(2, dtype=np.int64), 1, spec)
    am = AdaptiveMetropolis(5, init_scale=1.0)
    gen = np.random.default_rng(4)
    for _ in range(50):
        state, acc = update_theta_am(state, am, gen, conditional=lambda th: -math.inf)
        assert not acc
    assert state.spec.theta == spec.theta


def test_numerical_failure_carries_dump():
    err = NumericalFailure("boom", {"iteration": 3})
    assert err.dump["iteration"] == 3 and isinstance(err, FloatingPointError)


@settings(max_examples=10, deadline=None)
@given(st.integers(2, 7), st.integers(1, 8), st.integers(0, 2**31),
       st.sampled_from(["weak", "ck", "hierarchical"]))
def test_short_chains_keep_consistent_state(p, n, seed, prior):
    Y = toy_data(p, n, seed)
    out = run_chain(Y, ChainConfig(iterations=25, burnin=5, thin=2, prior=prior, seed=seed, check_every=5))
    for b in out.partition_trace:
        assert b.p == p
    assert np.all(out.k_trace >= 1) and np.all(out.k_trace <= p)
