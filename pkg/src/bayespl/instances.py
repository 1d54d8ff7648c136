"""Instance pseudo-mask pipeline.

A dropout-free seed prediction anchors instance identities. Each stochastic
pass is matched to the seed by minimum-cost assignment on negative mask IoU;
matched masks intersect into a unanimity mask and their soft scores
accumulate. Per-point binary entropy of the accumulated score is filtered
with the same percentile rule as the semantic pipeline.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import assignment, kernels, semantic

DEFAULT_MIN_IOU = 0.25
DEFAULT_MASK_THRESHOLD = 0.5


def to_mask(soft, mask_threshold: float = DEFAULT_MASK_THRESHOLD) -> np.ndarray:
    """Binarize per-instance, per-point scores at mask_threshold (>= rule)."""
    arr = np.asarray(soft, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"soft scores must be 2-D (instances x points), got shape {arr.shape}")
    if arr.size and (float(arr.min()) < -1e-9 or float(arr.max()) > 1.0 + 1e-9):
        m, n = np.argwhere((arr < -1e-9) | (arr > 1.0 + 1e-9))[0]
        raise ValueError(f"score outside [0, 1] at instance {m}, point {n}: {arr[m, n]}")
    return arr >= float(mask_threshold)


@dataclass(frozen=True)
class InstancePassOutput:
    """One prediction's soft instance masks: rows are instances, columns points."""

    soft: np.ndarray  # (M, N) in [0, 1]
    mask_threshold: float = DEFAULT_MASK_THRESHOLD

    def to_mask(self) -> np.ndarray:
        return to_mask(self.soft, self.mask_threshold)

    @property
    def num_instances(self) -> int:
        return self.soft.shape[0]

    @property
    def num_points(self) -> int:
        return self.soft.shape[1]


@dataclass(frozen=True)
class InstanceAccumulator:
    """Running intersection and score sums over the seed and matched passes."""

    unanimous: np.ndarray  # (M, N) bool
    acc_scores: np.ndarray  # (M, N) float64
    contributions: np.ndarray  # (M,) int64, seed plus matched passes


@dataclass(frozen=True)
class InstancePseudoMasks:
    """Filtered binary pseudo masks with the entropies and threshold behind them.

    tau is None when no point survives unanimity (including the empty-seed
    case). pass_matchings[k] holds the surviving (pass_row, seed_col, iou)
    triples of pass k, sorted by pass row.
    """

    masks: np.ndarray  # (M, N) bool
    kept_instances: tuple[int, ...]
    per_point_entropy: np.ndarray  # (M, N) nats
    tau: float | None
    pass_matchings: tuple[tuple[tuple[int, int, float], ...], ...]


def _as_pass_output(value, mask_threshold: float) -> InstancePassOutput:
    if isinstance(value, InstancePassOutput):
        return value
    return InstancePassOutput(soft=np.asarray(value, dtype=np.float64), mask_threshold=mask_threshold)


def _accumulate(seed: InstancePassOutput, passes, min_iou: float):
    """Match every pass against the fixed seed, intersecting and summing.

    Elimination (a seed instance unmatched, or matched below min_iou, in some
    pass) only zeroes the unanimity row; the instance still participates in
    later matchings so that pass order cannot change the result.
    """
    seed_mask = seed.to_mask()
    M, N = seed_mask.shape
    unanimous = seed_mask.copy()
    acc = np.array(seed.soft, dtype=np.float64)
    contributions = np.ones(M, dtype=np.int64)
    matchings = []
    for k, pss in enumerate(passes):
        pass_mask = pss.to_mask()
        if pass_mask.shape[1] != N:
            raise ValueError(f"pass {k} has {pass_mask.shape[1]} points, seed has {N}")
        cost = assignment.iou_cost(pass_mask, seed_mask)
        pairs = assignment.lsa(cost).pairs if min(cost.shape) else ()
        survivors = []
        matched_cols = np.zeros(M, dtype=bool)
        for r, c in pairs:
            iou = -float(cost[r, c])
            if iou < min_iou:
                continue
            survivors.append((int(r), int(c), iou))
            matched_cols[c] = True
            unanimous[c] &= pass_mask[r]
            acc[c] += pss.soft[r]
            contributions[c] += 1
        unanimous[~matched_cols] = False
        matchings.append(tuple(survivors))
    return InstanceAccumulator(unanimous=unanimous, acc_scores=acc, contributions=contributions), tuple(matchings)


def generate_instance_pseudo_labels(
    seed,
    passes,
    p_tau: float = 0.75,
    min_iou: float = DEFAULT_MIN_IOU,
    mask_threshold: float = DEFAULT_MASK_THRESHOLD,
) -> InstancePseudoMasks:
    """Run the full pipeline: match, intersect, accumulate, entropy-filter.

    The percentile cut runs over the unanimous points of the whole scene
    jointly (row-major instance/point order breaks entropy ties). A scene
    where every instance is eliminated, or with an empty seed, returns empty
    masks and tau None rather than an error.
    """
    seed = _as_pass_output(seed, mask_threshold)
    passes = [_as_pass_output(p, mask_threshold) for p in passes]
    if not passes:
        raise ValueError("need at least one stochastic pass")
    K = len(passes)
    N = seed.num_points
    for k, pss in enumerate(passes):
        if pss.num_points != N:
            raise ValueError(f"pass {k} has {pss.num_points} points, seed has {N}")
    p_tau = semantic._check_p_tau(p_tau)

    accum, matchings = _accumulate(seed, passes, float(min_iou))
    M = seed.num_instances
    p = np.clip(accum.acc_scores / float(K + 1), 0.0, 1.0)
    entropy = kernels.binary_entropy(p)

    masks = np.zeros((M, N), dtype=bool)
    flat_unanimous = np.flatnonzero(accum.unanimous.ravel())
    tau = None
    if flat_unanimous.size:
        selected, tau = semantic._rank_select(entropy.ravel()[flat_unanimous], p_tau)
        masks.ravel()[flat_unanimous[selected]] = True
    kept = tuple(int(m) for m in np.flatnonzero(masks.any(axis=1)))
    return InstancePseudoMasks(
        masks=masks,
        kept_instances=kept,
        per_point_entropy=entropy,
        tau=tau,
        pass_matchings=matchings,
    )


@dataclass(frozen=True)
class HeuristicExactReport:
    """Side-by-side totals of per-pass assignment vs exhaustive joint matching."""

    heuristic_total: float
    exact_total: float
    ratio: float  # heuristic / exact, 1.0 when both totals are zero
    pairings_agree: bool
    heuristic_pairs: tuple[tuple[tuple[int, int], ...], ...]
    exact_pairs: tuple[tuple[tuple[int, int], ...], ...]


def heuristic_vs_exact_report(seed, passes, mask_threshold: float = DEFAULT_MASK_THRESHOLD) -> HeuristicExactReport:
    """Compare the per-pass matching against the exhaustive joint optimum.

    Runs without the min_iou discard so both sides optimize the same raw
    total-IoU objective. Input sizes must satisfy the exhaustive search
    bounds (at most 3 passes, at most 4 instances per set).
    """
    seed = _as_pass_output(seed, mask_threshold)
    passes = [_as_pass_output(p, mask_threshold) for p in passes]
    seed_mask = seed.to_mask()
    pass_masks = [p.to_mask() for p in passes]

    heuristic_total = 0.0
    heuristic_pairs = []
    for pass_mask in pass_masks:
        cost = assignment.iou_cost(pass_mask, seed_mask)
        if min(cost.shape) == 0:
            heuristic_pairs.append(())
            continue
        res = assignment.lsa(cost)
        heuristic_total += -float(res.total_cost)
        heuristic_pairs.append(res.pairs)

    exact = assignment.npartite_bruteforce(seed_mask, pass_masks)
    agree = all(set(h) == set(e) for h, e in zip(heuristic_pairs, exact.per_pass_pairs))
    if exact.total_iou > 0.0:
        ratio = heuristic_total / exact.total_iou
    else:
        ratio = 1.0
    return HeuristicExactReport(
        heuristic_total=heuristic_total,
        exact_total=float(exact.total_iou),
        ratio=float(ratio),
        pairings_agree=bool(agree),
        heuristic_pairs=tuple(heuristic_pairs),
        exact_pairs=exact.per_pass_pairs,
    )
