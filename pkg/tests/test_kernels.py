"""Backend parity: the numba kernels must match the numpy fallback."""
import numpy as np
import pytest

from bayespl.kernels import _numpy

try:
    from bayespl.kernels import _numba

    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False

needs_numba = pytest.mark.skipif(not HAVE_NUMBA, reason="numba backend unavailable")


def _random_passes(rng, K, N, C):
    raw = rng.gamma(1.0, 1.0, size=(K, N, C))
    return raw / raw.sum(axis=2, keepdims=True)


@needs_numba
def test_aggregate_parity():
    rng = np.random.default_rng(11)
    for K, N, C in ((1, 7, 2), (5, 64, 4), (9, 200, 8)):
        passes = np.ascontiguousarray(_random_passes(rng, K, N, C))
        for t in (1, max(1, K // 2), K):
            mean_a, ent_a, votes_a = _numpy.aggregate_passes(passes, t)
            mean_b, ent_b, votes_b = _numba.aggregate_passes(passes, t)
            np.testing.assert_array_equal(mean_a, mean_b)
            np.testing.assert_allclose(ent_a, ent_b, rtol=0, atol=1e-12)
            np.testing.assert_array_equal(votes_a, votes_b)


@needs_numba
def test_aggregate_parity_on_ties():
    # Exact float ties between classes must break identically.
    passes = np.full((3, 5, 4), 0.25)
    mean_a, ent_a, votes_a = _numpy.aggregate_passes(passes, 3)
    mean_b, ent_b, votes_b = _numba.aggregate_passes(passes, 3)
    np.testing.assert_array_equal(mean_a, mean_b)
    np.testing.assert_array_equal(votes_a, votes_b)
    assert (votes_a == 0).all()


@needs_numba
def test_binary_entropy_parity():
    rng = np.random.default_rng(12)
    p = np.concatenate([rng.random(500), [0.0, 1.0, 0.5]])
    a = _numpy.binary_entropy(p)
    b = _numba.binary_entropy(p)
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-12)


@needs_numba
def test_pairwise_iou_parity_exact():
    rng = np.random.default_rng(13)
    a = rng.random((6, 300)) < 0.3
    b = rng.random((9, 300)) < 0.5
    # Counting is integer, so both backends must agree bit for bit.
    np.testing.assert_array_equal(_numpy.pairwise_iou(a, b), _numba.pairwise_iou(a, b))


@needs_numba
def test_lsa_solve_parity():
    rng = np.random.default_rng(14)
    for rows, cols in ((1, 1), (3, 3), (4, 7), (8, 8)):
        cost = np.ascontiguousarray(rng.uniform(-1, 1, size=(rows, cols)))
        col4row_a, _, _ = _numpy.lsa_solve(cost)
        col4row_b, _, _ = _numba.lsa_solve(cost)
        np.testing.assert_array_equal(col4row_a, col4row_b)


def test_wrapper_validation():
    from bayespl import kernels

    with pytest.raises(ValueError):
        kernels.aggregate_passes(np.zeros((3, 4)), 2)
    with pytest.raises(ValueError):
        kernels.pairwise_iou(np.zeros((2, 3), bool), np.zeros((2, 4), bool))
    with pytest.raises(ValueError):
        kernels.lsa_solve(np.zeros((3, 2)))


def test_backend_name_reported():
    from bayespl import kernels

    assert kernels.BACKEND in ("numba", "numpy")
