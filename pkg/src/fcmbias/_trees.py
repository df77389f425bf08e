"""Compiled kernels for growing and evaluating classification trees."""

import numpy as np
from numba import njit

GINI = 0
ENTROPY = 1


@njit(cache=True)
def _impurity(counts, total, criterion):
    if total <= 0:
        return 0.0
    acc = 0.0
    if criterion == GINI:
        for k in range(counts.shape[0]):
            p = counts[k] / total
            acc += p * p
        return 1.0 - acc
    for k in range(counts.shape[0]):
        if counts[k] > 0:
            p = counts[k] / total
            acc -= p * np.log2(p)
    return acc


@njit(cache=True)
def build_tree(X, y, n_classes, nominal, n_cats, max_features, criterion, max_depth, seed, bootstrap):
    """Grow one tree; returns (feature, threshold, left, right, value).

    Leaves have ``left == -1``. Nominal nodes send rows whose category
    equals ``threshold`` to the left child; numeric nodes send rows with
    ``x <= threshold`` left.
    """
    np.random.seed(seed)
    n, m = X.shape
    if bootstrap:
        samples = np.random.randint(0, n, n)
    else:
        samples = np.arange(n)
    cap = 2 * n + 1
    feature = np.full(cap, -1, np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, np.int64)
    right = np.full(cap, -1, np.int64)
    value = np.zeros((cap, n_classes))

    stack_node = np.zeros(cap, np.int64)
    stack_start = np.zeros(cap, np.int64)
    stack_end = np.zeros(cap, np.int64)
    stack_depth = np.zeros(cap, np.int64)
    sp = 0
    stack_node[0] = 0
    stack_start[0] = 0
    stack_end[0] = n
    stack_depth[0] = 0
    sp = 1
    node_count = 1

    counts = np.zeros(n_classes)
    lcounts = np.zeros(n_classes)
    rcounts = np.zeros(n_classes)
    max_cats = 1
    for f in range(m):
        if n_cats[f] > max_cats:
            max_cats = n_cats[f]
    cat_counts = np.zeros((max_cats, n_classes))

    while sp > 0:
        sp -= 1
        node = stack_node[sp]
        start = stack_start[sp]
        end = stack_end[sp]
        depth = stack_depth[sp]
        size = end - start

        counts[:] = 0.0
        for i in range(start, end):
            counts[y[samples[i]]] += 1.0
        for k in range(n_classes):
            value[node, k] = counts[k] / size
        parent_imp = _impurity(counts, size, criterion)
        if parent_imp <= 1e-12 or size < 2 or (max_depth >= 0 and depth >= max_depth):
            continue

        best_score = np.inf
        best_f = -1
        best_thr = 0.0
        visited = 0
        perm = np.random.permutation(m)
        for pi in range(m):
            if visited >= max_features:
                break
            f = perm[pi]
            if nominal[f]:
                cat_counts[: n_cats[f], :] = 0.0
                for i in range(start, end):
                    s = samples[i]
                    cat_counts[int(X[s, f]), y[s]] += 1.0
                present = 0
                for c in range(n_cats[f]):
                    if cat_counts[c].sum() > 0:
                        present += 1
                if present < 2:
                    continue
                visited += 1
                for c in range(n_cats[f]):
                    nl = cat_counts[c].sum()
                    if nl == 0:
                        continue
                    for k in range(n_classes):
                        lcounts[k] = cat_counts[c, k]
                        rcounts[k] = counts[k] - cat_counts[c, k]
                    nr = size - nl
                    score = nl * _impurity(lcounts, nl, criterion) + nr * _impurity(rcounts, nr, criterion)
                    if score < best_score:
                        best_score = score
                        best_f = f
                        best_thr = float(c)
            else:
                vals = np.empty(size)
                labs = np.empty(size, np.int64)
                for i in range(size):
                    s = samples[start + i]
                    vals[i] = X[s, f]
                    labs[i] = y[s]
                order = np.argsort(vals, kind="mergesort")
                if vals[order[0]] == vals[order[size - 1]]:
                    continue
                visited += 1
                lcounts[:] = 0.0
                for i in range(size - 1):
                    lcounts[labs[order[i]]] += 1.0
                    a = vals[order[i]]
                    b = vals[order[i + 1]]
                    if a == b:
                        continue
                    nl = i + 1.0
                    nr = size - nl
                    for k in range(n_classes):
                        rcounts[k] = counts[k] - lcounts[k]
                    score = nl * _impurity(lcounts, nl, criterion) + nr * _impurity(rcounts, nr, criterion)
                    if score < best_score:
                        best_score = score
                        best_f = f
                        thr = 0.5 * (a + b)
                        if thr >= b:
                            thr = a
                        best_thr = thr
        if best_f < 0:
            continue

        # partition samples[start:end] in place
        lo = start
        hi = end - 1
        nom = nominal[best_f]
        while lo <= hi:
            v = X[samples[lo], best_f]
            go_left = (v == best_thr) if nom else (v <= best_thr)
            if go_left:
                lo += 1
            else:
                tmp = samples[lo]
                samples[lo] = samples[hi]
                samples[hi] = tmp
                hi -= 1
        mid = lo
        feature[node] = best_f
        threshold[node] = best_thr
        left[node] = node_count
        right[node] = node_count + 1
        # push right first so the left subtree is numbered first
        stack_node[sp] = node_count + 1
        stack_start[sp] = mid
        stack_end[sp] = end
        stack_depth[sp] = depth + 1
        sp += 1
        stack_node[sp] = node_count
        stack_start[sp] = start
        stack_end[sp] = mid
        stack_depth[sp] = depth + 1
        sp += 1
        node_count += 2

    return (
        feature[:node_count].copy(),
        threshold[:node_count].copy(),
        left[:node_count].copy(),
        right[:node_count].copy(),
        value[:node_count].copy(),
    )


@njit(cache=True)
def predict_forest(X, roots, feature, threshold, left, right, value, nominal):
    """Mean leaf probability over trees for each row of ``X``."""
    n = X.shape[0]
    n_classes = value.shape[1]
    n_trees = roots.shape[0]
    out = np.zeros((n, n_classes))
    for t in range(n_trees):
        root = roots[t]
        for i in range(n):
            node = root
            while left[node] >= 0:
                f = feature[node]
                v = X[i, f]
                if nominal[f]:
                    go_left = v == threshold[node]
                else:
                    go_left = v <= threshold[node]
                node = left[node] if go_left else right[node]
            for k in range(n_classes):
                out[i, k] += value[node, k]
    return out / n_trees
