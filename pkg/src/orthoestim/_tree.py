"""Compiled kernels for CART regression trees (variance-reduction splits).

Each call reseeds the thread-local RNG, so a tree is a pure function of
(X, y, hyperparameters, seed) no matter which thread runs it.
"""

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def grow_tree(X, y, min_split, min_leaf, max_depth, m_try, do_bootstrap, seed):
    np.random.seed(seed)
    n, p = X.shape

    idx = np.empty(n, np.int64)
    if do_bootstrap:
        for i in range(n):
            idx[i] = np.random.randint(0, n)
    else:
        for i in range(n):
            idx[i] = i
    sample = idx.copy()

    cap = 2 * n + 1
    feature = np.full(cap, -1, np.int64)
    threshold = np.zeros(cap, np.float64)
    left = np.full(cap, -1, np.int64)
    right = np.full(cap, -1, np.int64)
    value = np.zeros(cap, np.float64)

    stack = np.empty((cap, 4), np.int64)
    stack[0, 0] = 0
    stack[0, 1] = 0
    stack[0, 2] = n
    stack[0, 3] = 0
    top = 1
    node_count = 1

    feats = np.empty(p, np.int64)
    buf = np.empty(n, np.int64)

    while top > 0:
        top -= 1
        node = stack[top, 0]
        start = stack[top, 1]
        end = stack[top, 2]
        depth = stack[top, 3]
        m = end - start

        s = 0.0
        for i in range(start, end):
            s += y[idx[i]]
        value[node] = s / m

        if m < min_split or m < 2 * min_leaf:
            continue
        if max_depth >= 0 and depth >= max_depth:
            continue

        ymin = y[idx[start]]
        ymax = ymin
        for i in range(start + 1, end):
            yy = y[idx[i]]
            if yy < ymin:
                ymin = yy
            if yy > ymax:
                ymax = yy
        if ymin == ymax:
            value[node] = ymin
            continue

        for j in range(p):
            feats[j] = j
        for j in range(m_try):
            rpos = j + np.random.randint(0, p - j)
            tmp = feats[j]
            feats[j] = feats[rpos]
            feats[rpos] = tmp
        # ascending feature order makes the lowest index win gain ties
        for j in range(1, m_try):
            key = feats[j]
            i = j - 1
            while i >= 0 and feats[i] > key:
                feats[i + 1] = feats[i]
                i -= 1
            feats[i + 1] = key

        parent = s * s / m
        best_gain = 0.0
        best_feat = -1
        best_thr = 0.0

        vals = np.empty(m, np.float64)
        for t in range(m_try):
            f = feats[t]
            for i in range(m):
                vals[i] = X[idx[start + i], f]
            order = np.argsort(vals)
            s_left = 0.0
            for i in range(m - 1):
                s_left += y[idx[start + order[i]]]
                n_left = i + 1
                if n_left < min_leaf:
                    continue
                n_right = m - n_left
                if n_right < min_leaf:
                    break
                v_here = vals[order[i]]
                v_next = vals[order[i + 1]]
                if v_here == v_next:
                    continue
                s_right = s - s_left
                gain = s_left * s_left / n_left + s_right * s_right / n_right - parent
                if gain > best_gain:
                    best_gain = gain
                    best_feat = f
                    best_thr = 0.5 * (v_here + v_next)

        if best_feat < 0:
            continue

        n_left = 0
        for i in range(m):
            row = idx[start + i]
            if X[row, best_feat] <= best_thr:
                buf[n_left] = row
                n_left += 1
        pos = n_left
        for i in range(m):
            row = idx[start + i]
            if X[row, best_feat] > best_thr:
                buf[pos] = row
                pos += 1
        for i in range(m):
            idx[start + i] = buf[i]

        left_id = node_count
        right_id = node_count + 1
        node_count += 2
        feature[node] = best_feat
        threshold[node] = best_thr
        left[node] = left_id
        right[node] = right_id

        stack[top, 0] = left_id
        stack[top, 1] = start
        stack[top, 2] = start + n_left
        stack[top, 3] = depth + 1
        top += 1
        stack[top, 0] = right_id
        stack[top, 1] = start + n_left
        stack[top, 2] = end
        stack[top, 3] = depth + 1
        top += 1

    return (
        feature[:node_count].copy(),
        threshold[:node_count].copy(),
        left[:node_count].copy(),
        right[:node_count].copy(),
        value[:node_count].copy(),
        sample,
    )


@njit(cache=True, nogil=True)
def predict_tree(feature, threshold, left, right, value, X, out):
    for i in range(X.shape[0]):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] += value[node]


@njit(cache=True, nogil=True)
def tree_depth(feature, left, right):
    n = feature.shape[0]
    depth = np.zeros(n, np.int64)
    deepest = 0
    for node in range(n):
        if feature[node] >= 0:
            depth[left[node]] = depth[node] + 1
            depth[right[node]] = depth[node] + 1
        elif depth[node] > deepest:
            deepest = depth[node]
    return deepest
