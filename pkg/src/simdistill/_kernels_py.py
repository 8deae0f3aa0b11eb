"""Reference (numpy) implementations of the hot kernels.

These are used when the compiled extension is unavailable and serve as the
comparison target for it in the test suite.
"""

import numpy as np


def softmax_kl_rows(scores_t, scores_s, tau):
    """Row-wise KL(softmax(t/tau) || softmax(s/tau)) and its score gradient.

    Returns ``(kl, grad)`` where ``kl[i]`` is the divergence for row ``i``
    and ``grad[i] = (p_s[i] - p_t[i]) / tau`` is d kl[i] / d scores_s[i].
    """
    st = np.asarray(scores_t, dtype=np.float64)
    ss = np.asarray(scores_s, dtype=np.float64)
    zt = st / tau
    zt -= zt.max(axis=1, keepdims=True)
    zs = ss / tau
    zs -= zs.max(axis=1, keepdims=True)
    logpt = zt - np.log(np.exp(zt).sum(axis=1, keepdims=True))
    logps = zs - np.log(np.exp(zs).sum(axis=1, keepdims=True))
    pt = np.exp(logpt)
    ps = np.exp(logps)
    kl = np.maximum(np.sum(pt * (logpt - logps), axis=1), 0.0)
    return kl, (ps - pt) / tau


def hungarian_min(cost):
    """Minimum-cost perfect assignment on a square matrix.

    Shortest augmenting path with row/column potentials, O(n^3).
    Returns ``col_of_row`` as an int array.
    """
    c = np.asarray(cost, dtype=np.float64)
    n = c.shape[0]
    inf = np.inf
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    # p[j]: row (1-based) matched to column j; column 0 is a virtual root
    p = np.zeros(n + 1, dtype=np.int64)
    way = np.zeros(n + 1, dtype=np.int64)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(n + 1, inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            free = ~used
            free[0] = False
            cols = np.nonzero(free)[0]
            cur = c[i0 - 1, cols - 1] - u[i0] - v[cols]
            better = cur < minv[cols]
            minv[cols[better]] = cur[better]
            way[cols[better]] = j0
            k = np.argmin(minv[cols])
            j1 = cols[k]
            delta = minv[j1]
            used_cols = np.nonzero(used)[0]
            u[p[used_cols]] += delta
            v[used_cols] -= delta
            minv[cols] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while True:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
            if j0 == 0:
                break
    col_of_row = np.empty(n, dtype=np.int64)
    for j in range(1, n + 1):
        col_of_row[p[j] - 1] = j - 1
    return col_of_row
