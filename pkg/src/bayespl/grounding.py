"""Selection pseudo-labels for referred instances.

Each stochastic pass scores its own candidate set, so score vectors are
first reordered into the seed's candidate order via the per-pass instance
matching. After that the candidates act as classes and the semantic
machinery applies unchanged: unanimous argmax vote, entropy of the mean
distribution, percentile threshold.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import semantic

IGNORE = semantic.IGNORE

UNALIGNED = -1


@dataclass(frozen=True)
class GroundingPassScores:
    """One pass's utterance-by-candidate scores plus its candidate alignment.

    candidate_alignment[j] is the seed candidate index of pass candidate j,
    or UNALIGNED for candidates the matching discarded. Non-negative targets
    must be unique.
    """

    scores: np.ndarray  # (U, M_k) softmax rows
    candidate_alignment: np.ndarray  # (M_k,) int64


@dataclass(frozen=True)
class ReorderedScores:
    """Pass scores mapped into seed candidate order.

    no_alignment[u] marks utterances whose entire score mass sat on
    unaligned candidates; their rows stay all-zero and they can never be
    labeled.
    """

    scores: np.ndarray  # (U, M)
    no_alignment: np.ndarray  # (U,) bool


@dataclass(frozen=True)
class GroundingPseudoLabels:
    """Per-utterance selected seed candidate index, IGNORE where filtered."""

    indices: np.ndarray  # (U,) int64
    entropy: np.ndarray  # (U,) nats
    tau: float
    p_tau: float


def _validate_rows(scores: np.ndarray, what: str) -> np.ndarray:
    arr = np.asarray(scores, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{what} must be 2-D (utterances x candidates), got shape {arr.shape}")
    if arr.size == 0:
        return arr
    if float(arr.min()) < -1e-9:
        u, j = np.argwhere(arr < -1e-9)[0]
        raise ValueError(f"{what}: negative score at utterance {u}, candidate {j}: {arr[u, j]}")
    sums = arr.sum(axis=1)
    off = np.abs(sums - 1.0) > semantic.SIMPLEX_TOL
    if off.any():
        u = int(np.argwhere(off)[0])
        raise ValueError(f"{what}: utterance {u} scores sum to {sums[u]:.6g}, expected 1")
    return arr


def reorder_scores(pass_scores: GroundingPassScores, seed_candidate_count: int) -> ReorderedScores:
    """Map a pass's columns into seed candidate order, zero-filling gaps.

    Seed candidates with no aligned pass candidate get score 0; rows are
    then renormalized. A row whose aligned mass is exactly zero is flagged
    no_alignment and left all-zero.
    """
    M = int(seed_candidate_count)
    if M < 0:
        raise ValueError(f"seed candidate count must be non-negative, got {M}")
    scores = _validate_rows(pass_scores.scores, "pass scores")
    alignment = np.asarray(pass_scores.candidate_alignment, dtype=np.int64)
    if alignment.ndim != 1 or alignment.shape[0] != scores.shape[1]:
        raise ValueError(
            f"alignment length {alignment.shape} does not match {scores.shape[1]} pass candidates"
        )
    aligned = alignment[alignment != UNALIGNED]
    if aligned.size and (int(aligned.min()) < 0 or int(aligned.max()) >= M):
        raise ValueError(f"alignment target out of range for {M} seed candidates: {aligned}")
    uniq, counts = np.unique(aligned, return_counts=True)
    if (counts > 1).any():
        dup = int(uniq[counts > 1][0])
        raise ValueError(f"alignment is not injective: seed candidate {dup} appears twice")

    U = scores.shape[0]
    out = np.zeros((U, M), dtype=np.float64)
    src = np.flatnonzero(alignment != UNALIGNED)
    out[:, alignment[src]] = scores[:, src]
    totals = out.sum(axis=1)
    no_alignment = totals == 0.0
    keep = ~no_alignment
    out[keep] /= totals[keep, None]
    return ReorderedScores(scores=out, no_alignment=no_alignment)


def solve_grounding(seed_scores, passes, p_tau: float = 0.75) -> GroundingPseudoLabels:
    """Vote and entropy-filter over seed candidate indices.

    The seed scores anchor candidate identity and the utterance/candidate
    shape but do not enter the vote or the mean (only stochastic passes
    do). Utterances flagged no_alignment in any pass are forced to IGNORE
    before thresholding.
    """
    seed = _validate_rows(seed_scores, "seed scores")
    U, M = seed.shape
    if not passes:
        raise ValueError("need at least one stochastic pass")
    mats = []
    blocked = np.zeros(U, dtype=bool)
    for k, pss in enumerate(passes):
        if isinstance(pss, ReorderedScores):
            arr = np.asarray(pss.scores, dtype=np.float64)
            flags = np.asarray(pss.no_alignment, dtype=bool)
        else:
            arr = np.asarray(pss, dtype=np.float64)
            flags = np.zeros(arr.shape[0] if arr.ndim == 2 else 0, dtype=bool)
        if arr.shape != (U, M):
            raise ValueError(f"pass {k} shape {arr.shape} does not match seed shape {(U, M)}")
        if flags.shape != (U,):
            raise ValueError(f"pass {k} no_alignment shape {flags.shape}, expected {(U,)}")
        blocked |= flags
        if flags.any():
            # All-zero rows would fail simplex validation; a uniform stand-in
            # is safe because blocked utterances are forced to IGNORE below.
            arr = arr.copy()
            arr[flags] = 1.0 / M
        mats.append(arr)

    est = semantic.mc_aggregate(np.stack(mats))
    if blocked.any():
        votes = est.votes.copy()
        votes[blocked] = semantic.NO_CONSENSUS
        est = replace(est, votes=votes)
    labels, tau = semantic._select_labels(est, est.entropy, p_tau, semantic.GLOBAL, descending=False)
    return GroundingPseudoLabels(indices=labels, entropy=est.entropy, tau=float(tau), p_tau=float(p_tau))
