"""Regression trees (CART) and random forests.

Split quality is the reduction in squared error. Among candidate splits the
first one found wins unless a later one is strictly better: features are
scanned in ascending index, thresholds in ascending value, and every
threshold is the midpoint of two adjacent distinct values. Each tree draws its
bootstrap rows and per-node feature subsets from its own stream, seeded by
``(seed, tree_index)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

LEAF = -1
GAIN_TOL = 1e-10


@njit(cache=True)
def _grow(X, y, idx, mtry, min_leaf, keys):
    n = idx.shape[0]
    p = X.shape[1]
    cap = 2 * n + 1
    feature = np.full(cap, LEAF, np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, np.int64)
    right = np.full(cap, -1, np.int64)
    value = np.zeros(cap)
    seg_s = np.zeros(cap, np.int64)
    seg_e = np.zeros(cap, np.int64)
    work = idx.copy()
    stack = np.zeros(cap, np.int64)
    seg_e[0] = n
    sp = 1
    n_nodes = 1
    while sp > 0:
        sp -= 1
        node = stack[sp]
        s = seg_s[node]
        e = seg_e[node]
        m = e - s
        total = 0.0
        for k in range(s, e):
            total += y[work[k]]
        mean = total / m
        value[node] = mean
        if m < 2 * min_leaf:
            continue
        sse = 0.0
        for k in range(s, e):
            d = y[work[k]] - mean
            sse += d * d
        if sse <= 0.0:
            continue
        cand = np.sort(np.argsort(keys[node])[:mtry])
        best_gain = GAIN_TOL * sse
        best_f = -1
        best_t = 0.0
        rows = work[s:e]
        yc = np.empty(m)
        for k in range(m):
            yc[k] = y[rows[k]] - mean
        for f in cand:
            vals = np.empty(m)
            for k in range(m):
                vals[k] = X[rows[k], f]
            order = np.argsort(vals, kind="mergesort")
            csum = 0.0
            for i in range(m - 1):
                csum += yc[order[i]]
                nl = i + 1
                a = vals[order[i]]
                b = vals[order[i + 1]]
                if a == b or nl < min_leaf or m - nl < min_leaf:
                    continue
                gain = csum * csum / nl + csum * csum / (m - nl)
                if gain > best_gain + GAIN_TOL * sse:
                    best_gain = gain
                    best_f = f
                    best_t = 0.5 * (a + b)
        if best_f < 0:
            continue
        # stable partition of the node's rows
        lo = s
        tmp = np.empty(m, np.int64)
        nr = 0
        for k in range(s, e):
            r = work[k]
            if X[r, best_f] <= best_t:
                work[lo] = r
                lo += 1
            else:
                tmp[nr] = r
                nr += 1
        for k in range(nr):
            work[lo + k] = tmp[k]
        feature[node] = best_f
        threshold[node] = best_t
        l_id = n_nodes
        r_id = n_nodes + 1
        n_nodes += 2
        left[node] = l_id
        right[node] = r_id
        seg_s[l_id] = s
        seg_e[l_id] = lo
        seg_s[r_id] = lo
        seg_e[r_id] = e
        stack[sp] = r_id
        stack[sp + 1] = l_id
        sp += 2
    return feature[:n_nodes], threshold[:n_nodes], left[:n_nodes], right[:n_nodes], value[:n_nodes]


@njit(cache=True)
def _predict_tree(X, feature, threshold, left, right, value):
    out = np.empty(X.shape[0])
    for i in range(X.shape[0]):
        node = 0
        while feature[node] != LEAF:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = value[node]
    return out


@dataclass
class Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.feature == LEAF))

    def predict(self, X) -> np.ndarray:
        X = np.ascontiguousarray(np.atleast_2d(X), dtype=float)
        return _predict_tree(X, self.feature, self.threshold, self.left, self.right, self.value)


def tree_stream(seed: int, tree_index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, tree_index])))


def default_mtry(p: int) -> int:
    return max(1, p // 3)


def fit_tree(X, y, rows=None, mtry: int | None = None, min_leaf: int = 1,
             rng: np.random.Generator | None = None) -> Tree:
    X = np.ascontiguousarray(np.atleast_2d(X), dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    rows = np.arange(n) if rows is None else np.asarray(rows, dtype=np.int64)
    mtry = p if mtry is None else min(max(mtry, 1), p)
    rng = rng or tree_stream(0, 0)
    keys = rng.random((2 * len(rows) + 1, p))
    return Tree(*_grow(X, y, rows, mtry, min_leaf, keys))


@dataclass
class ForestModel:
    trees: list[Tree]
    mtry: int
    min_leaf: int
    seed: int
    bootstrap: np.ndarray          # (B, n) row indices per tree
    names: list[str] = field(default_factory=list)

    @property
    def B(self) -> int:
        return len(self.trees)

    def tree_predictions(self, X) -> np.ndarray:
        X = np.ascontiguousarray(np.atleast_2d(X), dtype=float)
        return np.vstack([t.predict(X) for t in self.trees])

    def predict(self, X) -> np.ndarray:
        return self.tree_predictions(X).mean(axis=0)

    def oob_mask(self, n: int) -> np.ndarray:
        """(B, n) True where row i is out of bag for tree b."""
        mask = np.ones((self.B, n), dtype=bool)
        for b, rows in enumerate(self.bootstrap):
            mask[b, rows] = False
        return mask


def fit_forest(X, y, B: int = 1500, mtry: int | None = None, min_leaf: int = 5, seed: int = 0,
               bootstrap: bool = True, names=None) -> ForestModel:
    X = np.ascontiguousarray(np.atleast_2d(X), dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    if n < 2 * min_leaf and n < 2:
        raise ValueError(f"{n} rows cannot be split with min_leaf {min_leaf}")
    mtry = default_mtry(p) if mtry is None else min(max(mtry, 1), p)
    trees, boots = [], np.empty((B, n), dtype=np.int64)
    for b in range(B):
        rng = tree_stream(seed, b)
        rows = rng.integers(0, n, n) if bootstrap else np.arange(n)
        boots[b] = rows
        keys = rng.random((2 * n + 1, p))
        trees.append(Tree(*_grow(X, y, rows, mtry, min_leaf, keys)))
    return ForestModel(trees, mtry, min_leaf, seed, boots, list(names or []))


def oob_predictions(forest: ForestModel, X) -> np.ndarray:
    """Mean prediction over the trees for which each row is out of bag (NaN if none)."""
    preds = forest.tree_predictions(X)
    mask = forest.oob_mask(preds.shape[1])
    counts = mask.sum(axis=0)
    with np.errstate(invalid="ignore"):
        return np.where(counts > 0, (preds * mask).sum(axis=0) / np.maximum(counts, 1), np.nan)


def oob_rmse_curve(forest: ForestModel, X, y) -> np.ndarray:
    """OOB RMSE using the first b trees, b = 1..B (for choosing B)."""
    preds = forest.tree_predictions(X)
    mask = forest.oob_mask(preds.shape[1])
    s = np.cumsum(preds * mask, axis=0)
    c = np.cumsum(mask, axis=0)
    y = np.asarray(y, dtype=float)
    out = np.full(forest.B, np.nan)
    for b in range(forest.B):
        ok = c[b] > 0
        if ok.any():
            out[b] = np.sqrt(np.mean((s[b, ok] / c[b, ok] - y[ok]) ** 2))
    return out


def permutation_importance(forest: ForestModel, X, y, seed: int = 0) -> np.ndarray:
    """Per feature: mean over trees of the OOB MSE increase after permuting it, over its std.

    Zero where the std is zero. Trees with no out-of-bag rows are skipped.
    """
    X = np.ascontiguousarray(np.atleast_2d(X), dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    mask = forest.oob_mask(n)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, 7])))
    diffs = []
    for b, tree in enumerate(forest.trees):
        oob = np.flatnonzero(mask[b])
        if oob.size == 0:
            continue
        Xo = X[oob]
        base = np.mean((tree.predict(Xo) - y[oob]) ** 2)
        row = np.empty(p)
        for j in range(p):
            Xp = Xo.copy()
            Xp[:, j] = Xo[rng.permutation(oob.size), j]
            row[j] = np.mean((tree.predict(Xp) - y[oob]) ** 2) - base
        diffs.append(row)
    if not diffs:
        return np.zeros(p)
    d = np.vstack(diffs)
    mean = d.mean(axis=0)
    sd = d.std(axis=0, ddof=1) if len(d) > 1 else np.zeros(p)
    return np.where(sd > 0, mean / np.where(sd > 0, sd, 1.0), 0.0)
