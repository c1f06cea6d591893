"""Numpy implementations of the hot kernels.

Used when the compiled extension is unavailable, and as the reference the
extension is tested against.
"""

import numpy as np

_CHUNK_ELEMENTS = 1 << 22


def l1_cdist(a, b, n_threads=1):
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    n, m = a.shape[0], b.shape[0]
    out = np.empty((n, m), dtype=np.float64)
    step = max(1, _CHUNK_ELEMENTS // max(1, m * a.shape[1]))
    for start in range(0, n, step):
        block = a[start:start + step, None, :] - b[None, :, :]
        np.abs(block, out=block)
        out[start:start + step] = block.sum(axis=2)
    return out


def l1_pair_backward(h, a_idx, b_idx, weights, out):
    """out[a] += w * sign(h[a] - h[b]); out[b] -= the same, pair by pair."""
    a_idx = np.asarray(a_idx, dtype=np.int64)
    b_idx = np.asarray(b_idx, dtype=np.int64)
    signed = np.sign(h[a_idx] - h[b_idx]) * np.asarray(weights, dtype=np.float64)[:, None]
    np.add.at(out, a_idx, signed)
    np.add.at(out, b_idx, -signed)
    return out


def greedy_match(cost, theta, max_rounds=50):
    """Rows are sources, columns targets. Returns (rows, cols, rounds, capped)."""
    cost = np.asarray(cost, dtype=np.float64)
    n, m = cost.shape
    alive = np.arange(n)
    free = np.ones(m, dtype=bool)
    match = np.full(n, -1, dtype=np.int64)
    rounds = 0
    capped = False
    while alive.size and free.any():
        free_idx = np.flatnonzero(free)
        sub = cost[np.ix_(alive, free_idx)]
        best = sub.argmin(axis=1)
        best_val = sub[np.arange(alive.size), best]
        ok = best_val < theta
        if not ok.any():
            break
        if rounds == max_rounds:
            capped = True
            break
        rounds += 1
        rows = alive[ok]
        cols = free_idx[best[ok]]
        vals = best_val[ok]
        # per contested column: smallest cost wins, then smallest row
        order = np.lexsort((rows, vals, cols))
        sorted_cols = cols[order]
        first = np.ones(order.size, dtype=bool)
        first[1:] = sorted_cols[1:] != sorted_cols[:-1]
        winners = order[first]
        match[rows[winners]] = cols[winners]
        free[cols[winners]] = False
        losers = np.ones(rows.size, dtype=bool)
        losers[winners] = False
        alive = rows[losers]
    matched = np.flatnonzero(match >= 0)
    return matched, match[matched], rounds, capped
