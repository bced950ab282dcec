"""numba kernels for the exhaustive hypercube walk."""

import numpy as np
from numba import njit

# running dot products are recomputed from scratch this often to bound drift
_RESYNC_MASK = (1 << 12) - 1


@njit(cache=True, nogil=True)
def _dots_from_code(xt, code, out):
    n, m = xt.shape
    for i in range(m):
        out[i] = 0.0
    for j in range(n):
        if (code >> j) & 1:
            for i in range(m):
                out[i] += xt[j, i]
        else:
            for i in range(m):
                out[i] -= xt[j, i]


@njit(cache=True, nogil=True)
def walk_shard(xt, threshold, prefix, free_bits, keep_from):
    """
    Gray-code walk over the codes ``(prefix << free_bits) | g``.

    ``xt`` is the transposed constraint matrix (n x m). For every visited code
    the index of the first violated constraint is computed (m when all hold);
    returns the histogram of that index and the codes whose index is at least
    ``keep_from``, together with their index.
    """
    n, m = xt.shape
    dots = np.empty(m)
    hist = np.zeros(m + 1, dtype=np.int64)
    cap = 1024
    codes = np.empty(cap, dtype=np.int64)
    fails = np.empty(cap, dtype=np.int16)
    kept = 0
    code = prefix << free_bits
    _dots_from_code(xt, code, dots)
    for step in range(1 << free_bits):
        if step > 0:
            j = 0
            while not (step >> j) & 1:
                j += 1
            code ^= 1 << j
            if step & _RESYNC_MASK == 0:
                _dots_from_code(xt, code, dots)
            elif (code >> j) & 1:
                for i in range(m):
                    dots[i] += 2.0 * xt[j, i]
            else:
                for i in range(m):
                    dots[i] -= 2.0 * xt[j, i]
        first = m
        for i in range(m):
            if abs(dots[i]) > threshold:
                first = i
                break
        hist[first] += 1
        if first >= keep_from:
            if kept == cap:
                cap *= 2
                new_codes = np.empty(cap, dtype=np.int64)
                new_fails = np.empty(cap, dtype=np.int16)
                new_codes[:kept] = codes[:kept]
                new_fails[:kept] = fails[:kept]
                codes = new_codes
                fails = new_fails
            codes[kept] = code
            fails[kept] = first
            kept += 1
    return hist, codes[:kept].copy(), fails[:kept].copy()


@njit(cache=True)
def union_find_labels(n_nodes, src, dst):
    """Root label of every node after uniting each (src[k], dst[k]) edge."""
    parent = np.arange(n_nodes)
    size = np.ones(n_nodes, dtype=np.int64)
    for k in range(src.size):
        a = src[k]
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        b = dst[k]
        while parent[b] != b:
            parent[b] = parent[parent[b]]
            b = parent[b]
        if a == b:
            continue
        if size[a] < size[b]:
            a, b = b, a
        parent[b] = a
        size[a] += size[b]
    for v in range(n_nodes):
        r = v
        while parent[r] != r:
            r = parent[r]
        parent[v] = r
    return parent
