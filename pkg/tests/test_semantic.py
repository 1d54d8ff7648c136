"""Aggregation, voting, entropy ranking, and quantile selection properties."""
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bayespl import semantic


def _simplex_stack(rng, K, N, C):
    raw = rng.gamma(1.0, 1.0, size=(K, N, C)) + 1e-9
    return raw / raw.sum(axis=2, keepdims=True)


def _correlated_stack(rng, K, N, C, sharp=6.0):
    """Pass stack whose points mostly, but not always, vote unanimously."""
    labels = rng.integers(0, C, size=N)
    alpha = np.ones((N, C))
    alpha[np.arange(N), labels] = sharp
    raw = rng.gamma(alpha[None, :, :].repeat(K, axis=0), 1.0) + 1e-9
    return raw / raw.sum(axis=2, keepdims=True)


@st.composite
def pass_stacks(draw):
    K = draw(st.integers(1, 6))
    N = draw(st.integers(1, 40))
    C = draw(st.integers(2, 6))
    seed = draw(st.integers(0, 2**31))
    return _simplex_stack(np.random.default_rng(seed), K, N, C)


def test_mean_and_votes_small_example():
    passes = np.array([
        [[0.9, 0.1], [0.2, 0.8], [0.6, 0.4]],
        [[0.8, 0.2], [0.3, 0.7], [0.4, 0.6]],
    ])
    est = semantic.mc_aggregate(passes)
    np.testing.assert_allclose(est.mean_probs[0], [0.85, 0.15])
    np.testing.assert_array_equal(est.votes, [0, 1, semantic.NO_CONSENSUS])
    expected = -(0.85 * math.log(0.85) + 0.15 * math.log(0.15))
    assert est.entropy[0] == pytest.approx(expected, abs=1e-12)


def test_argmax_tie_breaks_to_lowest_class():
    passes = np.full((3, 2, 4), 0.25)
    est = semantic.mc_aggregate(passes)
    np.testing.assert_array_equal(est.votes, [0, 0])


def test_simplex_validation_named_coordinates():
    passes = np.full((1, 2, 2), 0.5)
    passes[0, 1] = [0.9, 0.3]
    with pytest.raises(ValueError, match=r"pass 0.*point 1"):
        semantic.mc_aggregate(passes)


def test_vote_threshold_range_checked():
    passes = np.full((3, 2, 2), 0.5)
    with pytest.raises(ValueError):
        semantic.mc_aggregate(passes, vote_threshold=0)
    with pytest.raises(ValueError):
        semantic.mc_aggregate(passes, vote_threshold=4)


@settings(deadline=None, max_examples=60)
@given(pass_stacks())
def test_entropy_bounds(passes):
    est = semantic.mc_aggregate(passes)
    C = passes.shape[2]
    assert (est.entropy >= -1e-12).all()
    assert (est.entropy <= math.log(C) + 1e-9).all()


@settings(deadline=None, max_examples=60)
@given(pass_stacks(), st.integers(0, 2**31))
def test_pass_permutation_invariance(passes, perm_seed):
    rng = np.random.default_rng(perm_seed)
    perm = rng.permutation(passes.shape[0])
    a = semantic.mc_aggregate(passes)
    b = semantic.mc_aggregate(passes[perm])
    np.testing.assert_allclose(a.mean_probs, b.mean_probs, atol=1e-12)
    np.testing.assert_array_equal(a.votes, b.votes)


@settings(deadline=None, max_examples=60)
@given(pass_stacks(), st.integers(0, 2**31))
def test_class_permutation_equivariance(passes, perm_seed):
    rng = np.random.default_rng(perm_seed)
    C = passes.shape[2]
    perm = rng.permutation(C)
    a = semantic.mc_aggregate(passes)
    b = semantic.mc_aggregate(passes[:, :, perm])
    np.testing.assert_allclose(a.entropy, b.entropy, atol=1e-9)
    # class c in the permuted stack is class perm[c] in the original
    relabeled = np.where(b.votes >= 0, perm[b.votes], semantic.NO_CONSENSUS)
    # ties may resolve differently across the relabeling; compare vote sets
    consensus_a = a.votes >= 0
    consensus_b = b.votes >= 0
    np.testing.assert_array_equal(consensus_a, consensus_b)
    mean_is_tied = np.isclose(
        np.sort(a.mean_probs, axis=1)[:, -1], np.sort(a.mean_probs, axis=1)[:, -2]
    )
    stable = consensus_a & ~mean_is_tied
    np.testing.assert_array_equal(a.votes[stable], relabeled[stable])


@settings(deadline=None, max_examples=60)
@given(pass_stacks())
def test_consensus_soundness(passes):
    est = semantic.mc_aggregate(passes)
    argmaxes = passes.argmax(axis=2)
    for i in np.flatnonzero(est.votes >= 0):
        assert (argmaxes[:, i] == est.votes[i]).all()


@settings(deadline=None, max_examples=40)
@given(pass_stacks())
def test_k1_reduction(passes):
    single = passes[:1]
    est = semantic.mc_aggregate(single)
    np.testing.assert_array_equal(est.votes, single[0].argmax(axis=1))
    np.testing.assert_allclose(est.mean_probs, single[0], atol=1e-12)


def test_relaxed_vote_threshold_is_superset():
    rng = np.random.default_rng(7)
    passes = _correlated_stack(rng, 9, 500, 4)
    strict = semantic.mc_aggregate(passes, vote_threshold=9)
    relaxed = semantic.mc_aggregate(passes, vote_threshold=5)
    s = strict.consensus_mask()
    r = relaxed.consensus_mask()
    assert (r | ~s).all()  # strict consensus implies relaxed consensus
    same = s & r
    np.testing.assert_array_equal(strict.votes[same], relaxed.votes[same])


def test_quantile_exact_count_distinct_entropies():
    rng = np.random.default_rng(8)
    for _ in range(50):
        n = int(rng.integers(1, 60))
        entropy = rng.permutation(np.linspace(0.1, 1.0, n))
        consensus = np.ones(n, dtype=bool)
        for p_tau in (0.5, 0.75, 1.0):
            tau = semantic.quantile_tau(entropy, consensus, p_tau)
            assert (entropy < tau).sum() == math.ceil(p_tau * n)


def test_quantile_tau_is_first_excluded_entropy():
    entropy = np.array([0.4, 0.1, 0.3, 0.2])
    consensus = np.ones(4, dtype=bool)
    tau = semantic.quantile_tau(entropy, consensus, 0.5)
    assert tau == pytest.approx(0.3)


def test_quantile_tau_p1_admits_maximum():
    entropy = np.array([0.4, 0.1])
    consensus = np.ones(2, dtype=bool)
    tau = semantic.quantile_tau(entropy, consensus, 1.0)
    assert tau > 0.4
    assert (entropy < tau).all()


def test_quantile_empty_consensus_errors():
    with pytest.raises(ValueError):
        semantic.quantile_tau(np.array([0.5]), np.array([False]), 0.75)


def test_quantile_p_tau_range_checked():
    e = np.array([0.5])
    m = np.array([True])
    for bad in (0.0, -0.1, 1.5):
        with pytest.raises(ValueError):
            semantic.quantile_tau(e, m, bad)


def test_solver_labeled_count_and_ignore():
    rng = np.random.default_rng(9)
    passes = _correlated_stack(rng, 5, 300, 4)
    est = semantic.mc_aggregate(passes)
    n_consensus = int(est.consensus_mask().sum())
    assert n_consensus > 0
    sol = semantic.solve_pseudo_labels(est, p_tau=0.75)
    labeled = sol.labeled_mask()
    assert labeled.sum() == math.ceil(0.75 * n_consensus)
    np.testing.assert_array_equal(sol.labels[labeled], est.votes[labeled])
    assert (sol.labels[~labeled] == semantic.IGNORE).all()
    # labeled points carry the lowest entropies among consensus points
    cons = est.consensus_mask()
    assert est.entropy[labeled].max() <= est.entropy[cons & ~labeled].min() + 1e-12


def test_solver_monotone_in_p_tau():
    rng = np.random.default_rng(10)
    passes = _correlated_stack(rng, 5, 200, 3)
    est = semantic.mc_aggregate(passes)
    prev = np.zeros(200, dtype=bool)
    for p_tau in (0.25, 0.5, 0.75, 1.0):
        sol = semantic.solve_pseudo_labels(est, p_tau)
        cur = sol.labeled_mask()
        assert (cur | ~prev).all()  # nested growth
        prev = cur


def test_tie_at_cut_still_exact_count():
    # six consensus points, all identical entropy: rank selection must
    # admit exactly ceil(0.5 * 6) = 3, not zero and not all six
    passes = np.stack([np.tile([0.7, 0.3], (6, 1))] * 3)
    est = semantic.mc_aggregate(passes)
    sol = semantic.solve_pseudo_labels(est, p_tau=0.5)
    assert sol.labeled_mask().sum() == 3
    # deterministic choice: the lowest point indices win the tie
    np.testing.assert_array_equal(np.flatnonzero(sol.labeled_mask()), [0, 1, 2])


def test_per_class_mode_counts_and_nan_tau():
    rng = np.random.default_rng(11)
    passes = _correlated_stack(rng, 4, 400, 3)
    est = semantic.mc_aggregate(passes)
    sol = semantic.solve_pseudo_labels(est, p_tau=0.5, mode=semantic.PER_CLASS)
    assert isinstance(sol.tau, np.ndarray) and sol.tau.shape == (3,)
    for c in range(3):
        in_class = (est.votes == c)
        n_c = int(in_class.sum())
        labeled_c = int((sol.labels == c).sum())
        if n_c:
            assert labeled_c == math.ceil(0.5 * n_c)
        else:
            assert labeled_c == 0
            assert math.isnan(sol.tau[c])


def test_naive_baseline_selects_by_confidence():
    rng = np.random.default_rng(12)
    passes = _correlated_stack(rng, 4, 200, 3)
    est = semantic.mc_aggregate(passes)
    sol = semantic.naive_threshold_baseline(est, p_tau=0.5)
    labeled = sol.labeled_mask()
    cons = est.consensus_mask()
    assert labeled.sum() == math.ceil(0.5 * cons.sum())
    conf = est.mean_probs.max(axis=1)
    assert conf[labeled].min() >= conf[cons & ~labeled].max() - 1e-12
    assert sol.ranking == "confidence-descending"


def test_class_balanced_baseline_per_class_counts():
    rng = np.random.default_rng(13)
    passes = _correlated_stack(rng, 4, 300, 3)
    est = semantic.mc_aggregate(passes)
    sol = semantic.class_balanced_baseline(est, p_tau=0.5)
    for c in range(3):
        n_c = int((est.votes == c).sum())
        if n_c:
            assert (sol.labels == c).sum() == math.ceil(0.5 * n_c)


def test_unknown_mode_rejected():
    rng = np.random.default_rng(14)
    est = semantic.mc_aggregate(_simplex_stack(rng, 2, 10, 2))
    with pytest.raises(ValueError):
        semantic.solve_pseudo_labels(est, 0.5, mode="percentile")
