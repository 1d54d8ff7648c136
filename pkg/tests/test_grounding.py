"""Candidate reordering and grounding label selection."""
import numpy as np
import pytest

from bayespl import grounding, semantic


def _rows(raw):
    arr = np.asarray(raw, dtype=np.float64)
    return arr / arr.sum(axis=1, keepdims=True)


def _random_grounding(rng, U, M, K, sharp=8.0):
    targets = rng.integers(0, M, size=U)
    alpha = np.ones((U, M))
    alpha[np.arange(U), targets] = sharp
    seed = rng.gamma(alpha, 1.0) + 1e-9
    seed /= seed.sum(axis=1, keepdims=True)
    passes = []
    for _ in range(K):
        p = rng.gamma(alpha, 1.0) + 1e-9
        passes.append(p / p.sum(axis=1, keepdims=True))
    return seed, passes


def test_reorder_identity():
    scores = _rows([[0.7, 0.3]])
    ps = grounding.GroundingPassScores(scores, np.array([0, 1]))
    ro = grounding.reorder_scores(ps, 2)
    np.testing.assert_allclose(ro.scores, scores)
    assert not ro.no_alignment.any()


def test_reorder_swap():
    ps = grounding.GroundingPassScores(_rows([[0.2, 0.8]]), np.array([1, 0]))
    ro = grounding.reorder_scores(ps, 2)
    np.testing.assert_allclose(ro.scores, [[0.8, 0.2]])


def test_reorder_partial_alignment_zero_fills_and_renormalizes():
    # two pass candidates land in seed slots 2 and 0 of three
    ps = grounding.GroundingPassScores(_rows([[0.7, 0.3]]), np.array([2, 0]))
    ro = grounding.reorder_scores(ps, 3)
    np.testing.assert_allclose(ro.scores, [[0.3, 0.0, 0.7]])
    assert not ro.no_alignment.any()


def test_reorder_unaligned_candidates_drop_mass():
    # candidate 1 is unmatched; its mass drops and rows renormalize
    ps = grounding.GroundingPassScores(_rows([[0.5, 0.5]]), np.array([0, grounding.UNALIGNED]))
    ro = grounding.reorder_scores(ps, 2)
    np.testing.assert_allclose(ro.scores, [[1.0, 0.0]])


def test_reorder_all_mass_unaligned_flags_utterance():
    ps = grounding.GroundingPassScores(
        _rows([[1.0, 0.0], [0.5, 0.5]]), np.array([grounding.UNALIGNED, 1])
    )
    ro = grounding.reorder_scores(ps, 2)
    np.testing.assert_array_equal(ro.no_alignment, [True, False])
    np.testing.assert_allclose(ro.scores[1], [0.0, 1.0])


def test_reorder_duplicate_alignment_rejected():
    ps = grounding.GroundingPassScores(_rows([[0.5, 0.5]]), np.array([1, 1]))
    with pytest.raises(ValueError, match="1"):
        grounding.reorder_scores(ps, 2)


def test_reorder_out_of_range_rejected():
    ps = grounding.GroundingPassScores(_rows([[0.5, 0.5]]), np.array([0, 2]))
    with pytest.raises(ValueError):
        grounding.reorder_scores(ps, 2)


def test_flagged_utterances_never_labeled():
    seed = _rows([[0.9, 0.1], [0.9, 0.1]])
    aligned = grounding.ReorderedScores(
        _rows([[0.9, 0.1], [0.9, 0.1]]), np.array([False, True])
    )
    sol = grounding.solve_grounding(seed, [aligned] * 3, p_tau=1.0)
    assert sol.indices[0] == 0
    assert sol.indices[1] == grounding.IGNORE


def test_single_candidate_votes_zero():
    seed = _rows([[1.0]])
    passes = [_rows([[1.0]])] * 3
    sol = grounding.solve_grounding(seed, passes, p_tau=1.0)
    assert sol.indices[0] == 0
    assert sol.entropy[0] == pytest.approx(0.0, abs=1e-12)


def test_near_unanimity_still_ignored():
    # utterance 0: 8 passes prefer candidate 0, the ninth prefers 1;
    # utterance 1 is unanimous so the quantile stays well defined
    high = _rows([[0.9, 0.1], [0.9, 0.1]])
    low = _rows([[0.2, 0.8], [0.9, 0.1]])
    passes = [high] * 8 + [low]
    seed = _rows([[0.5, 0.5], [0.5, 0.5]])
    sol = grounding.solve_grounding(seed, passes, p_tau=1.0)
    assert sol.indices[0] == grounding.IGNORE
    assert sol.indices[1] == 0


def test_no_consensus_anywhere_propagates():
    # a scene where every utterance splits has no quantile to take
    high = _rows([[0.9, 0.1]])
    low = _rows([[0.2, 0.8]])
    seed = _rows([[0.5, 0.5]])
    with pytest.raises(ValueError):
        grounding.solve_grounding(seed, [high, low], p_tau=1.0)


def test_seed_is_excluded_from_voting_and_mean():
    # seed prefers candidate 1, every pass prefers candidate 0
    seed = _rows([[0.1, 0.9]])
    passes = [_rows([[0.8, 0.2]])] * 4
    sol = grounding.solve_grounding(seed, passes, p_tau=1.0)
    assert sol.indices[0] == 0
    expected = -(0.8 * np.log(0.8) + 0.2 * np.log(0.2))
    assert sol.entropy[0] == pytest.approx(expected, abs=1e-12)


def test_identity_alignment_matches_semantic_solver():
    rng = np.random.default_rng(20)
    for _ in range(10):
        U = int(rng.integers(2, 30))
        M = int(rng.integers(2, 6))
        K = int(rng.integers(1, 6))
        seed, passes = _random_grounding(rng, U, M, K)
        est = semantic.mc_aggregate(np.stack(passes))
        if not est.consensus_mask().any():
            with pytest.raises(ValueError):
                grounding.solve_grounding(seed, passes, p_tau=0.75)
            continue
        sol = grounding.solve_grounding(seed, passes, p_tau=0.75)
        sem = semantic.solve_pseudo_labels(est, p_tau=0.75)
        np.testing.assert_array_equal(sol.indices, sem.labels)
        assert sol.tau == pytest.approx(sem.tau)


def test_candidate_permutation_equivariance():
    rng = np.random.default_rng(21)
    U, M, K = 12, 4, 3
    seed, passes = _random_grounding(rng, U, M, K)
    perm = rng.permutation(M)
    inv = np.argsort(perm)

    base = grounding.solve_grounding(seed, passes, p_tau=0.75)
    # permuted problem: new column n holds old column perm[n]; pass rows
    # arrive in original candidate order with the matching alignment
    seed_p = seed[:, perm]
    passes_p = [
        grounding.reorder_scores(grounding.GroundingPassScores(p, inv), M)
        for p in passes
    ]
    permuted = grounding.solve_grounding(seed_p, passes_p, p_tau=0.75)

    labeled = base.indices != grounding.IGNORE
    np.testing.assert_array_equal(permuted.indices != grounding.IGNORE, labeled)
    np.testing.assert_array_equal(
        perm[permuted.indices[labeled]], base.indices[labeled]
    )


def test_labeled_set_nests_in_p_tau():
    rng = np.random.default_rng(22)
    seed, passes = _random_grounding(rng, 40, 4, 4)
    prev = np.zeros(40, dtype=bool)
    for p_tau in (0.25, 0.5, 0.75, 1.0):
        sol = grounding.solve_grounding(seed, passes, p_tau=p_tau)
        cur = sol.indices != grounding.IGNORE
        assert (cur | ~prev).all()
        prev = cur


def test_candidate_count_mismatch_rejected():
    seed = _rows([[0.5, 0.5]])
    with pytest.raises(ValueError):
        grounding.solve_grounding(seed, [_rows([[0.3, 0.3, 0.4]])])
