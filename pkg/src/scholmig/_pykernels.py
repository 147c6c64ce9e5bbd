"""Pure-Python/numpy versions of the compiled kernels (same contracts)."""

from __future__ import annotations

import numpy as np

SINGLE, COMPLETE, AVERAGE = 0, 1, 2


def _runs(ptr, idx):
    return [set(idx[ptr[i]:ptr[i + 1]].tolist()) for i in range(len(ptr) - 1)]


def distance_matrix(name_key, first_initial, initial_mask,
                    co_ptr, co_idx, as_ptr, as_idx, fu_ptr, fu_idx, gr_ptr, gr_idx, w):
    n = len(name_key)
    co, asj, fu, gr = _runs(co_ptr, co_idx), _runs(as_ptr, as_idx), _runs(fu_ptr, fu_idx), _runs(gr_ptr, gr_idx)
    key = name_key.tolist()
    fi = first_initial.tolist()
    mask = [int(m) for m in initial_mask]
    out = np.zeros((n, n), dtype=np.float64)
    for a in range(n):
        for b in range(a + 1, n):
            s = 0.0
            if key[a] >= 0 and key[b] >= 0:
                if key[a] != key[b]:
                    out[a, b] = out[b, a] = 1.0
                    continue
                s += w[0]
            elif fi[a] >= 0 and fi[b] >= 0:
                if key[a] < 0 and key[b] < 0:
                    hit = fi[a] == fi[b]
                elif key[a] < 0:
                    hit = (mask[b] >> fi[a]) & 1
                else:
                    hit = (mask[a] >> fi[b]) & 1
                if hit:
                    s += w[1]
            s += min(w[2] * len(co[a] & co[b]), w[3])
            s += min(w[4] * len(asj[a] & asj[b]), w[5])
            if fu[a] & fu[b]:
                s += w[6]
            s += min(w[7] * len(gr[a] & gr[b]), w[8])
            out[a, b] = out[b, a] = 1.0 / (1.0 + s)
    return out


def cluster_threshold(dist, threshold, linkage):
    """Full-matrix rescan per merge; argmin over the upper triangle gives
    the lexicographically smallest (i, j) among tied minima."""
    n = dist.shape[0]
    labels = np.arange(n, dtype=np.int64)
    size = np.ones(n, dtype=np.int64)
    active = np.ones(n, dtype=bool)
    work = np.where(np.triu(np.ones((n, n), dtype=bool), k=1), dist, np.inf)
    while n > 1:
        flat = int(np.argmin(work))
        i, j = divmod(flat, n)
        if not work[i, j] <= threshold:
            break
        others = active.copy()
        others[[i, j]] = False
        dki, dkj = dist[others, i], dist[others, j]
        if linkage == SINGLE:
            v = np.minimum(dki, dkj)
        elif linkage == COMPLETE:
            v = np.maximum(dki, dkj)
        else:
            ni, nj = float(size[i]), float(size[j])
            v = (ni * dki + nj * dkj) / (ni + nj)
        dist[others, i] = v
        dist[i, others] = v
        active[j] = False
        size[i] += size[j]
        labels[labels == j] = i
        work[j, :] = np.inf
        work[:, j] = np.inf
        ks = np.flatnonzero(others)
        lower = ks[ks < i]
        upper = ks[ks > i]
        work[lower, i] = dist[lower, i]
        work[i, upper] = dist[i, upper]
    return labels
