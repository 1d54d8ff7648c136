"""Numba kernel implementations.

Loop-level twins of `_numpy`; same accumulation orders, same tie rules.
cache=True so compilation cost is paid once per environment.
"""
from __future__ import annotations

import numpy as np
import numba as nb

njit_kwargs = {"cache": True, "nogil": True}


@nb.njit(**njit_kwargs)
def aggregate_passes(passes, vote_threshold):
    K, N, C = passes.shape
    mean = np.empty((N, C), dtype=np.float64)
    entropy = np.empty(N, dtype=np.float64)
    votes = np.empty(N, dtype=np.int64)
    counts = np.empty(C, dtype=np.int64)
    for n in range(N):
        for c in range(C):
            s = passes[0, n, c]
            for k in range(1, K):
                s += passes[k, n, c]
            mean[n, c] = s / K
        ent = 0.0
        for c in range(C):
            p = mean[n, c]
            if p > 0.0:
                ent -= p * np.log(p)
        entropy[n] = ent
        for c in range(C):
            counts[c] = 0
        for k in range(K):
            best = 0
            best_val = passes[k, n, 0]
            for c in range(1, C):
                if passes[k, n, c] > best_val:
                    best_val = passes[k, n, c]
                    best = c
            counts[best] += 1
        winner = 0
        winner_count = counts[0]
        for c in range(1, C):
            if counts[c] > winner_count:
                winner_count = counts[c]
                winner = c
        votes[n] = winner if winner_count >= vote_threshold else -1
    return mean, entropy, votes


@nb.njit(**njit_kwargs)
def binary_entropy(p):
    out = np.empty(p.shape, dtype=np.float64)
    flat_in = p.ravel()
    flat_out = out.ravel()
    for i in range(flat_in.size):
        x = flat_in[i]
        a = x * np.log(x) if x > 0.0 else 0.0
        q = 1.0 - x
        b = q * np.log(q) if q > 0.0 else 0.0
        flat_out[i] = -(a + b)
    return out


@nb.njit(**njit_kwargs)
def pairwise_iou(a, b):
    M, N = a.shape
    M2 = b.shape[0]
    asum = np.empty(M, dtype=np.int64)
    bsum = np.empty(M2, dtype=np.int64)
    for i in range(M):
        s = 0
        for n in range(N):
            if a[i, n]:
                s += 1
        asum[i] = s
    for j in range(M2):
        s = 0
        for n in range(N):
            if b[j, n]:
                s += 1
        bsum[j] = s
    out = np.zeros((M, M2), dtype=np.float64)
    for i in range(M):
        for j in range(M2):
            inter = 0
            for n in range(N):
                if a[i, n] and b[j, n]:
                    inter += 1
            union = asum[i] + bsum[j] - inter
            if union > 0:
                out[i, j] = inter / union
    return out


@nb.njit(**njit_kwargs)
def lsa_solve(cost):
    R, Cn = cost.shape
    u = np.zeros(R, dtype=np.float64)
    v = np.zeros(Cn, dtype=np.float64)
    col4row = np.full(R, -1, dtype=np.int64)
    row4col = np.full(Cn, -1, dtype=np.int64)
    shortest = np.empty(Cn, dtype=np.float64)
    path = np.empty(Cn, dtype=np.int64)
    on_cols = np.empty(Cn, dtype=np.bool_)
    on_rows = np.empty(R, dtype=np.bool_)
    for cur_row in range(R):
        for j in range(Cn):
            shortest[j] = np.inf
            path[j] = -1
            on_cols[j] = False
        for i in range(R):
            on_rows[i] = False
        min_val = 0.0
        i = cur_row
        sink = -1
        while sink == -1:
            on_rows[i] = True
            for j in range(Cn):
                if on_cols[j]:
                    continue
                reduced = min_val + cost[i, j] - u[i] - v[j]
                if reduced < shortest[j]:
                    shortest[j] = reduced
                    path[j] = i
            lowest = np.inf
            jbest = -1
            for j in range(Cn):
                if not on_cols[j] and shortest[j] < lowest:
                    lowest = shortest[j]
                    jbest = j
            if jbest == -1 or not np.isfinite(lowest):
                raise RuntimeError("assignment search exhausted; non-finite cost slipped through validation")
            min_val = lowest
            on_cols[jbest] = True
            if row4col[jbest] == -1:
                sink = jbest
            else:
                i = row4col[jbest]
        u[cur_row] += min_val
        for ii in range(R):
            if on_rows[ii] and ii != cur_row:
                u[ii] += min_val - shortest[col4row[ii]]
        for j in range(Cn):
            if on_cols[j]:
                v[j] -= min_val - shortest[j]
        j = sink
        while True:
            ii = path[j]
            row4col[j] = ii
            nxt = col4row[ii]
            col4row[ii] = j
            if ii == cur_row:
                break
            j = nxt
    return col4row, u, v
