"""Linear sum assignment on rectangular cost matrices, plus test oracles.

`lsa` runs a shortest-augmenting-path core (see kernels.lsa_solve) and then
refines the result so that, among cost-equal optima, the lexicographically
smallest pair list (sorted by row) is returned. Ties are detected through
the dual potentials: a pair can belong to some optimal assignment only if
its reduced cost is zero, so for generic real costs the refinement costs
one scan and no extra solves.

`lsa_bruteforce` and `npartite_bruteforce` are independent exhaustive
searches used as oracles; they share no code with the solver path.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from . import kernels

# Totals within this relative band count as cost-equal when breaking ties.
TIE_REL_TOL = 1e-9

# Work cap for the exhaustive searches (permutations per row subset).
_BRUTE_MAX_ARRANGEMENTS = 2_000_000

_perm_cache: dict[tuple[int, int], np.ndarray] = {}


@dataclass(frozen=True)
class Assignment:
    """Partial injective row-to-column matching with its total cost."""

    pairs: tuple[tuple[int, int], ...]
    total_cost: float


@dataclass(frozen=True)
class NPartiteMatching:
    """Joint matching of K pass mask sets onto the seed set."""

    per_pass_pairs: tuple[tuple[tuple[int, int], ...], ...]
    total_iou: float


def _validate_cost(cost) -> np.ndarray:
    arr = np.asarray(cost, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"cost must be 2-D, got shape {arr.shape}")
    finite = np.isfinite(arr)
    if not finite.all():
        r, c = np.argwhere(~finite)[0]
        raise ValueError(f"non-finite cost entry at ({int(r)}, {int(c)}): {arr[r, c]}")
    return arr


def _pair_total(cost: np.ndarray, pairs) -> float:
    if not pairs:
        return 0.0
    rows = np.fromiter((p[0] for p in pairs), dtype=np.int64, count=len(pairs))
    cols = np.fromiter((p[1] for p in pairs), dtype=np.int64, count=len(pairs))
    return float(cost[rows, cols].sum())


def _solve_oriented(cost: np.ndarray):
    """Core solve on either orientation.

    Returns (pairs sorted by row, u, v) where u/v are dual potentials over
    the original rows/columns.
    """
    R, Cn = cost.shape
    if R <= Cn:
        col4row, u, v = kernels.lsa_solve(cost)
        pairs = [(r, int(col4row[r])) for r in range(R)]
    else:
        row4col, dual_cols, dual_rows = kernels.lsa_solve(cost.T)
        pairs = sorted((int(row4col[c]), c) for c in range(Cn))
        u, v = dual_rows, dual_cols
    return pairs, u, v


def _opt_total(cost: np.ndarray, rows: np.ndarray, cols: np.ndarray) -> float:
    """Optimal total over a submatrix, matching min(len(rows), len(cols)) pairs."""
    if rows.size == 0 or cols.size == 0:
        return 0.0
    sub = cost[np.ix_(rows, cols)]
    pairs, _, _ = _solve_oriented(sub)
    return _pair_total(sub, pairs)


def lsa(cost) -> Assignment:
    """Minimum-total-cost assignment of min(R, Cn) pairs.

    The surplus side of a rectangular matrix stays unmatched. Among optima
    whose totals agree within TIE_REL_TOL (scaled), the lexicographically
    smallest pair list sorted by row index is returned, so equal inputs
    always produce identical pairings.
    """
    arr = _validate_cost(cost)
    R, Cn = arr.shape
    k = min(R, Cn)
    if k == 0:
        return Assignment((), 0.0)

    scale = max(1.0, float(np.abs(arr).max()) * k)
    tol = TIE_REL_TOL * scale

    anchor, u, v = _solve_oriented(arr)
    total_opt = _pair_total(arr, anchor)

    fixed: list[tuple[int, int]] = []
    fixed_cost = 0.0
    avail = np.ones(Cn, dtype=bool)
    row_lo = 0

    while len(fixed) < k:
        need = k - len(fixed)
        ra, ca = anchor[0]
        accepted: tuple[int, int] | None = None
        for r in range(row_lo, ra + 1):
            if R - r < need:
                break
            if r == ra:
                cols = np.flatnonzero(avail & (arr[r] - u[r] - v <= tol))
                cols = cols[cols < ca]
            else:
                cols = np.flatnonzero(avail & (arr[r] - u[r] - v <= tol))
            for c in cols:
                c = int(c)
                avail[c] = False
                rest_rows = np.arange(r + 1, R)
                rest_cols = np.flatnonzero(avail)
                candidate = fixed_cost + arr[r, c] + _opt_total(arr, rest_rows, rest_cols)
                avail[c] = True
                if abs(candidate - total_opt) <= tol:
                    accepted = (r, c)
                    break
            if accepted is not None:
                break
        if accepted is None:
            accepted = (ra, ca)
        r, c = accepted
        fixed.append((r, c))
        fixed_cost += arr[r, c]
        avail[c] = False
        row_lo = r + 1
        if len(fixed) == k:
            break
        if accepted == (ra, ca):
            # The anchor pair survived; the remaining anchor pairs and the
            # existing duals stay optimal for the reduced problem.
            anchor = anchor[1:]
        else:
            rest_rows = np.arange(row_lo, R)
            rest_cols = np.flatnonzero(avail)
            sub = arr[np.ix_(rest_rows, rest_cols)]
            sub_pairs, su, sv = _solve_oriented(sub)
            anchor = [(int(rest_rows[i]), int(rest_cols[j])) for i, j in sub_pairs]
            u = np.full(R, np.inf)
            v = np.full(Cn, np.inf)
            u[rest_rows] = su
            v[rest_cols] = sv

    pairs = tuple(fixed)
    return Assignment(pairs, _pair_total(arr, pairs))


def _arrangements(n: int, k: int) -> np.ndarray:
    """All k-permutations of range(n) in lexicographic order, cached."""
    key = (n, k)
    if key not in _perm_cache:
        table = np.array(list(itertools.permutations(range(n), k)), dtype=np.int64)
        _perm_cache[key] = table.reshape(-1, k)
    return _perm_cache[key]


def _n_arrangements(n: int, k: int) -> int:
    out = 1
    for i in range(k):
        out *= n - i
    return out


def lsa_bruteforce(cost) -> Assignment:
    """Exhaustive-search assignment oracle; same determinism rule as lsa.

    Bounded to min(R, Cn) <= 9 and a total enumeration budget; intended for
    validation, not production matching.
    """
    arr = _validate_cost(cost)
    R, Cn = arr.shape
    k = min(R, Cn)
    if k == 0:
        return Assignment((), 0.0)
    if k > 9:
        raise ValueError(f"exhaustive search bounded to min(R, Cn) <= 9, got {k}")

    if R <= Cn:
        row_subsets = [tuple(range(R))]
    else:
        row_subsets = list(itertools.combinations(range(R), k))
    total_work = len(row_subsets) * _n_arrangements(Cn, k)
    if total_work > _BRUTE_MAX_ARRANGEMENTS:
        raise ValueError(f"exhaustive search budget exceeded ({total_work} arrangements)")

    perms = _arrangements(Cn, k)
    scale = max(1.0, float(np.abs(arr).max()) * k)
    tol = TIE_REL_TOL * scale

    best_total = np.inf
    best_pairs: tuple[tuple[int, int], ...] | None = None
    for rows in row_subsets:
        row_idx = np.asarray(rows, dtype=np.int64)
        totals = arr[row_idx[None, :], perms].sum(axis=1)
        local_min = float(totals.min())
        first = int(np.flatnonzero(totals <= local_min + tol)[0])
        pairs = tuple((int(rows[i]), int(perms[first, i])) for i in range(k))
        if local_min < best_total - tol:
            best_total, best_pairs = local_min, pairs
        elif local_min <= best_total + tol and pairs < best_pairs:
            best_total, best_pairs = min(best_total, local_min), pairs
    return Assignment(best_pairs, _pair_total(arr, best_pairs))


def iou_cost(a, b) -> np.ndarray:
    """Negative pairwise IoU cost between mask stacks a (R, N) and b (Cn, N).

    Entries lie in [-1, 0]; pairs of two empty masks cost 0 so an empty mask
    never outbids any overlapping pair.
    """
    return -kernels.pairwise_iou(a, b)


def _mask_iou(a: np.ndarray, b: np.ndarray) -> float:
    inter = int(np.logical_and(a, b).sum())
    union = int(np.logical_or(a, b).sum())
    return inter / union if union else 0.0


def _max_injections(n_from: int, n_to: int):
    """All maximal partial injections from range(n_from) into range(n_to).

    Yields pair lists sorted by source index, in lexicographic order.
    """
    k = min(n_from, n_to)
    if k == 0:
        yield ()
        return
    for sources in itertools.combinations(range(n_from), k):
        for targets in itertools.permutations(range(n_to), k):
            yield tuple(zip(sources, targets))


def npartite_bruteforce(seed_masks, pass_mask_sets) -> NPartiteMatching:
    """Exhaustive joint matching of every pass's masks onto the seed masks.

    Maximizes the summed IoU(seed, matched pass mask) over all passes.
    Bounded to at most 4 instances per set and K <= 3 passes; the search
    space is the product of per-pass injections. Uses its own IoU
    arithmetic so it stays independent of the solver path.
    """
    seed = np.asarray(seed_masks, dtype=bool)
    passes = [np.asarray(p, dtype=bool) for p in pass_mask_sets]
    if seed.ndim != 2:
        raise ValueError("seed masks must be 2-D (instances x points)")
    K = len(passes)
    if not 1 <= K <= 3:
        raise ValueError(f"exhaustive n-partite search bounded to 1 <= K <= 3, got {K}")
    if seed.shape[0] > 4 or any(p.shape[0] > 4 for p in passes):
        raise ValueError("exhaustive n-partite search bounded to at most 4 instances per set")
    for p in passes:
        if p.ndim != 2 or p.shape[1] != seed.shape[1]:
            raise ValueError("mask point counts differ between seed and a pass")

    per_pass_options = []
    for p in passes:
        options = []
        for pairs in _max_injections(p.shape[0], seed.shape[0]):
            total = 0.0
            for pi, sj in pairs:
                total += _mask_iou(seed[sj], p[pi])
            options.append((pairs, total))
        per_pass_options.append(options)

    best_total = -np.inf
    best_choice = None
    for choice in itertools.product(*per_pass_options):
        total = 0.0
        for _, t in choice:
            total += t
        if total > best_total:
            best_total = total
            best_choice = tuple(pairs for pairs, _ in choice)
    return NPartiteMatching(best_choice, best_total)
