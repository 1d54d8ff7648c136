"""Pure-numpy kernel implementations.

Fallback backend for environments without numba. Every function here has a
loop-level twin in `_numba`; accumulation orders are kept identical (ascending
pass index, ascending class index) so the two backends agree to the last ulp
on everything except transcendental calls.
"""
from __future__ import annotations

import numpy as np


def aggregate_passes(passes: np.ndarray, vote_threshold: int):
    """Aggregate K stochastic softmax passes.

    passes: float64 array (K, N, C). Returns (mean, entropy, votes) where
    votes[i] is the class whose per-pass argmax count reaches vote_threshold,
    else -1. Argmax ties go to the lowest class index.
    """
    K, N, C = passes.shape
    acc = passes[0].astype(np.float64).copy()
    for k in range(1, K):
        acc += passes[k]
    mean = acc / K
    with np.errstate(divide="ignore", invalid="ignore"):
        plogp = mean * np.log(mean)
    plogp[~(mean > 0.0)] = 0.0
    entropy = np.zeros(N, dtype=np.float64)
    for c in range(C):
        entropy -= plogp[:, c]
    am = passes.argmax(axis=2)
    counts = np.zeros((N, C), dtype=np.int64)
    point_idx = np.arange(N)
    for k in range(K):
        counts[point_idx, am[k]] += 1
    winner = counts.argmax(axis=1)
    winner_count = counts[point_idx, winner]
    votes = np.where(winner_count >= vote_threshold, winner, -1).astype(np.int64)
    return mean, entropy, votes


def binary_entropy(p: np.ndarray) -> np.ndarray:
    """Elementwise -(p ln p + (1-p) ln(1-p)) with 0 ln 0 := 0. p in [0, 1]."""
    p = np.asarray(p, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        a = p * np.log(p)
        q = 1.0 - p
        b = q * np.log(q)
    a[~(p > 0.0)] = 0.0
    b[~(q > 0.0)] = 0.0
    return -(a + b)


def pairwise_iou(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """IoU matrix between two mask stacks a (M, N) and b (M2, N), both bool.

    Integer intersection counts keep the result exact and run-to-run stable
    (no threaded BLAS reduction); both-empty pairs get IoU 0.
    """
    ai = a.astype(np.int64)
    bi = b.astype(np.int64)
    inter = ai @ bi.T
    union = ai.sum(axis=1)[:, None] + bi.sum(axis=1)[None, :] - inter
    out = np.zeros(inter.shape, dtype=np.float64)
    nz = union > 0
    out[nz] = inter[nz] / union[nz]
    return out


def lsa_solve(cost: np.ndarray):
    """Shortest-augmenting-path assignment core for R <= Cn.

    Returns (col4row, u, v): the matched column per row and the dual
    potentials certifying optimality (reduced cost of matched pairs is 0,
    all reduced costs nonnegative up to rounding).
    """
    R, Cn = cost.shape
    u = np.zeros(R, dtype=np.float64)
    v = np.zeros(Cn, dtype=np.float64)
    col4row = np.full(R, -1, dtype=np.int64)
    row4col = np.full(Cn, -1, dtype=np.int64)
    for cur_row in range(R):
        shortest = np.full(Cn, np.inf)
        path = np.full(Cn, -1, dtype=np.int64)
        on_cols = np.zeros(Cn, dtype=bool)
        on_rows = np.zeros(R, dtype=bool)
        min_val = 0.0
        i = cur_row
        sink = -1
        while sink == -1:
            on_rows[i] = True
            reduced = min_val + cost[i] - u[i] - v
            upd = ~on_cols & (reduced < shortest)
            shortest[upd] = reduced[upd]
            path[upd] = i
            masked = np.where(on_cols, np.inf, shortest)
            j = int(np.argmin(masked))
            min_val = float(masked[j])
            if not np.isfinite(min_val):
                raise RuntimeError("assignment search exhausted; non-finite cost slipped through validation")
            on_cols[j] = True
            if row4col[j] == -1:
                sink = j
            else:
                i = int(row4col[j])
        u[cur_row] += min_val
        others = on_rows.copy()
        others[cur_row] = False
        if others.any():
            u[others] += min_val - shortest[col4row[others]]
        v[on_cols] -= min_val - shortest[on_cols]
        j = sink
        while True:
            i = int(path[j])
            row4col[j] = i
            nxt = int(col4row[i])
            col4row[i] = j
            if i == cur_row:
                break
            j = nxt
    return col4row, u, v
