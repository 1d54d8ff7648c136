"""Monte Carlo aggregation, entropy scoring, voting, and label selection.

The solver labels a point only when the K stochastic passes agree on its
argmax (unanimity by default, relaxable to a t-of-K majority) and its
mean-distribution entropy falls below tau, the percentile threshold induced
by the requested labeling fraction p_tau over the consensus set.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels

IGNORE = -1
NO_CONSENSUS = -1

GLOBAL = "global"
PER_CLASS = "per-class"
MODES = (GLOBAL, PER_CLASS)

SIMPLEX_TOL = 1e-5


@dataclass(frozen=True)
class PosteriorEstimate:
    """MC posterior summary: mean distribution, entropy, and vote per point."""

    mean_probs: np.ndarray  # (N, C)
    entropy: np.ndarray  # (N,) nats
    votes: np.ndarray  # (N,) int64, NO_CONSENSUS where passes disagree

    @property
    def num_points(self) -> int:
        return self.votes.shape[0]

    @property
    def num_classes(self) -> int:
        return self.mean_probs.shape[1]

    def consensus_mask(self) -> np.ndarray:
        return self.votes != NO_CONSENSUS


@dataclass(frozen=True)
class SemanticPseudoLabels:
    """Per-point class label or IGNORE, with the threshold that produced it.

    tau is the entropy cut in nats for the entropy selector; the confidence
    baselines store their confidence cut in the same field (PerClass mode
    stores a per-class vector, NaN for classes with no consensus points).
    """

    labels: np.ndarray  # (N,) int64
    tau: float | np.ndarray
    p_tau: float
    mode: str = GLOBAL
    ranking: str = "entropy-ascending"

    def labeled_mask(self) -> np.ndarray:
        return self.labels != IGNORE


def _stack_passes(passes) -> np.ndarray:
    if isinstance(passes, np.ndarray) and passes.ndim == 3:
        arr = np.asarray(passes, dtype=np.float64)
    else:
        mats = [np.asarray(p, dtype=np.float64) for p in passes]
        if not mats:
            raise ValueError("need at least one stochastic pass")
        shape = mats[0].shape
        for idx, m in enumerate(mats):
            if m.ndim != 2:
                raise ValueError(f"pass {idx} is not 2-D (shape {m.shape})")
            if m.shape != shape:
                raise ValueError(f"pass {idx} shape {m.shape} differs from pass 0 shape {shape}")
        arr = np.stack(mats)
    if arr.ndim != 3 or arr.shape[0] < 1:
        raise ValueError(f"expected K >= 1 passes of shape (N, C), got {arr.shape}")
    return arr


def _validate_simplex(arr: np.ndarray) -> None:
    if arr.size == 0:
        return
    if float(arr.min()) < -1e-9:
        k, n, c = np.argwhere(arr < -1e-9)[0]
        raise ValueError(f"negative probability at pass {k}, point {n}, class {c}: {arr[k, n, c]}")
    sums = arr.sum(axis=2)
    off = np.abs(sums - 1.0) > SIMPLEX_TOL
    if off.any():
        k, n = np.argwhere(off)[0]
        raise ValueError(f"pass {k}, point {n}: row sums to {sums[k, n]:.6g}, expected 1 within {SIMPLEX_TOL:g}")


def mc_aggregate(passes, vote_threshold: int | None = None) -> PosteriorEstimate:
    """Aggregate K stochastic passes into a PosteriorEstimate.

    mean_probs is the elementwise mean, entropy the Shannon entropy of the
    mean in nats (0 ln 0 := 0), and votes[i] the class on which at least
    vote_threshold per-pass argmaxes agree (default: all K, the unanimity
    rule). Argmax ties, and equal-count winners below unanimity, resolve to
    the lowest class index.
    """
    arr = _stack_passes(passes)
    K = arr.shape[0]
    if vote_threshold is None:
        vote_threshold = K
    if not 1 <= int(vote_threshold) <= K:
        raise ValueError(f"vote_threshold must lie in 1..{K}, got {vote_threshold}")
    _validate_simplex(arr)
    mean, entropy, votes = kernels.aggregate_passes(arr, int(vote_threshold))
    return PosteriorEstimate(mean_probs=mean, entropy=entropy, votes=votes)


def _rank_select(values: np.ndarray, p_tau: float, descending: bool = False):
    """Admit the first ceil(p_tau * n) values by (score, index) rank.

    Returns (selected positions, cut). The cut is the first non-admitted
    score (nextafter the extreme admitted score when everything is
    admitted), so strictly-better-than-cut recovers the selection whenever
    scores at the boundary are distinct; boundary ties are resolved by
    admitting the lower index first.
    """
    n = values.size
    target = math.ceil(p_tau * n)
    key = -values if descending else values
    order = np.lexsort((np.arange(n), key))
    selected = order[:target]
    if target < n:
        cut = float(values[order[target]])
    else:
        extreme = float(values[order[-1]])
        cut = float(np.nextafter(extreme, -np.inf if descending else np.inf))
    return selected, cut


def _check_p_tau(p_tau: float) -> float:
    p_tau = float(p_tau)
    if not 0.0 < p_tau <= 1.0:
        raise ValueError(f"p_tau must lie in (0, 1], got {p_tau}")
    return p_tau


def quantile_tau(entropy, consensus_mask, p_tau, mode: str = GLOBAL, votes=None, num_classes: int | None = None):
    """Entropy threshold admitting a p_tau fraction of consensus points.

    Global mode returns a scalar: the nearest-rank cut such that the
    ceil(p_tau * #consensus) lowest-entropy consensus points fall strictly
    below it (boundary ties admit the lower point index first). PerClass
    mode applies the same rule within each voted class and returns a
    per-class vector (NaN where a class has no consensus points).
    """
    p_tau = _check_p_tau(p_tau)
    entropy = np.asarray(entropy, dtype=np.float64)
    mask = np.asarray(consensus_mask, dtype=bool)
    idx = np.flatnonzero(mask)
    if idx.size == 0:
        raise ValueError("empty consensus set")
    if mode == GLOBAL:
        _, cut = _rank_select(entropy[idx], p_tau)
        return cut
    if mode != PER_CLASS:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    if votes is None:
        raise ValueError("per-class mode needs the votes vector")
    votes = np.asarray(votes)
    classes = np.unique(votes[idx])
    if num_classes is None:
        num_classes = int(classes.max()) + 1
    taus = np.full(num_classes, np.nan)
    for c in classes:
        idx_c = idx[votes[idx] == c]
        _, cut = _rank_select(entropy[idx_c], p_tau)
        taus[int(c)] = cut
    return taus


def _select_labels(est: PosteriorEstimate, scores: np.ndarray, p_tau: float, mode: str, descending: bool):
    p_tau = _check_p_tau(p_tau)
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    idx = np.flatnonzero(est.consensus_mask())
    if idx.size == 0:
        raise ValueError("empty consensus set")
    labels = np.full(est.num_points, IGNORE, dtype=np.int64)
    if mode == GLOBAL:
        selected, cut = _rank_select(scores[idx], p_tau, descending)
        chosen = idx[selected]
        labels[chosen] = est.votes[chosen]
        return labels, cut
    taus = np.full(est.num_classes, np.nan)
    for c in np.unique(est.votes[idx]):
        idx_c = idx[est.votes[idx] == c]
        selected, cut = _rank_select(scores[idx_c], p_tau, descending)
        labels[idx_c[selected]] = c
        taus[int(c)] = cut
    return labels, taus


def solve_pseudo_labels(est: PosteriorEstimate, p_tau: float = 0.75, mode: str = GLOBAL) -> SemanticPseudoLabels:
    """Label consensus points with entropy below the p_tau percentile cut."""
    labels, tau = _select_labels(est, est.entropy, p_tau, mode, descending=False)
    return SemanticPseudoLabels(labels=labels, tau=tau, p_tau=float(p_tau), mode=mode, ranking="entropy-ascending")


def naive_threshold_baseline(est: PosteriorEstimate, p_tau: float = 0.75, mode: str = GLOBAL) -> SemanticPseudoLabels:
    """Same selection machinery ranked by max-softmax confidence, descending."""
    confidence = est.mean_probs.max(axis=1)
    labels, tau = _select_labels(est, confidence, p_tau, mode, descending=True)
    return SemanticPseudoLabels(labels=labels, tau=tau, p_tau=float(p_tau), mode=mode, ranking="confidence-descending")


def class_balanced_baseline(est: PosteriorEstimate, p_tau: float = 0.75) -> SemanticPseudoLabels:
    """Confidence ranking with per-class quotas (the CBST-style baseline)."""
    return naive_threshold_baseline(est, p_tau, mode=PER_CLASS)
