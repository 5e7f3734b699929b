"""HDBSCAN* for one-dimensional data.

Core distance is the distance to the ``min_samples``-th nearest neighbour,
counting the point itself as the first. The minimum spanning tree of the
mutual-reachability graph is built with Prim's algorithm over the full
(implicit) graph, so the cost is O(n^2) time and O(n) memory.

Points are processed in ascending value order internally; this makes the
result independent of input order and of a constant shift of integer data.
Equal mutual-reachability weights are merged left to right in that order,
which decides where a point halfway between two clusters ends up.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

NOISE = -1


class TooFewPoints(ValueError):
    pass


@dataclass
class Clustering:
    labels: np.ndarray
    n_clusters: int
    min_cluster_size: int
    min_samples: int

    def members(self, cluster_id: int) -> np.ndarray:
        return np.flatnonzero(self.labels == cluster_id)


def core_distances(x_sorted: np.ndarray, k: int) -> np.ndarray:
    """Distance to the k-th nearest point (self included) for sorted 1-D data."""
    n = len(x_sorted)
    if k <= 1:
        return np.zeros(n)
    k = min(k, n)
    offsets = np.arange(-(k - 1), k)
    idx = np.arange(n)[:, None] + offsets[None, :]
    valid = (idx >= 0) & (idx < n)
    d = np.abs(x_sorted[np.clip(idx, 0, n - 1)] - x_sorted[:, None])
    d[~valid] = np.inf
    return np.partition(d, k - 1, axis=1)[:, k - 1]


def mst_prim(x: np.ndarray, core: np.ndarray) -> np.ndarray:
    """MST edges (a, b, weight) of the mutual-reachability graph."""
    n = len(x)
    in_tree = np.zeros(n, dtype=bool)
    best = np.full(n, np.inf)
    parent = np.zeros(n, dtype=np.int64)
    edges = np.empty((n - 1, 3))
    current = 0
    for e in range(n - 1):
        in_tree[current] = True
        d = np.maximum(np.abs(x - x[current]), np.maximum(core, core[current]))
        better = (d < best) & ~in_tree
        best[better] = d[better]
        parent[better] = current
        best[in_tree] = np.inf
        nxt = int(np.argmin(best))
        edges[e] = (parent[nxt], nxt, best[nxt])
        current = nxt
    return edges


def single_linkage(edges: np.ndarray, n: int) -> np.ndarray:
    """Linkage rows (left, right, distance, size); node ids >= n are merges."""
    order = np.argsort(edges[:, 2], kind="mergesort")
    uf_parent = np.arange(2 * n - 1)
    size = np.ones(2 * n - 1, dtype=np.int64)

    def find(a):
        root = a
        while uf_parent[root] != root:
            root = uf_parent[root]
        while uf_parent[a] != root:
            uf_parent[a], a = root, uf_parent[a]
        return root

    out = np.empty((n - 1, 4))
    nxt = n
    for row, e in enumerate(order):
        a, b, w = int(edges[e, 0]), int(edges[e, 1]), edges[e, 2]
        ra, rb = find(a), find(b)
        lo, hi = min(ra, rb), max(ra, rb)
        out[row] = (lo, hi, w, size[ra] + size[rb])
        uf_parent[ra] = uf_parent[rb] = nxt
        size[nxt] = size[ra] + size[rb]
        nxt += 1
    return out


def _lambda(dist: float, cap: float) -> float:
    return 1.0 / dist if dist > 0 else cap


def condense_tree(linkage: np.ndarray, n: int, min_cluster_size: int):
    """Condensed cluster tree as parallel lists (parent, child, lambda, child_size).

    Clusters are numbered from ``n`` (the root); ids below ``n`` are points.
    """
    dists = linkage[:, 2]
    positive = dists[dists > 0]
    cap = 10.0 / positive.min() if positive.size else 1.0

    def children(node):
        r = linkage[node - n]
        return int(r[0]), int(r[1]), r[2]

    def count(node):
        return 1 if node < n else int(linkage[node - n, 3])

    def leaves(node):
        stack, out = [node], []
        while stack:
            m = stack.pop()
            if m < n:
                out.append(m)
            else:
                l, r, _ = children(m)
                stack.append(r)
                stack.append(l)
        return out

    root = 2 * n - 2
    parents, kids, lambdas, sizes = [], [], [], []
    if n == 1:
        return [n], [0], [cap], [1]
    relabel = {root: n}
    next_label = n + 1
    stack = [root]
    while stack:
        node = stack.pop()
        left, right, dist = children(node)
        lam = _lambda(dist, cap)
        cl, cr = count(left), count(right)
        me = relabel[node]
        if cl >= min_cluster_size and cr >= min_cluster_size:
            for child, c in ((left, cl), (right, cr)):
                relabel[child] = next_label
                parents.append(me)
                kids.append(next_label)
                lambdas.append(lam)
                sizes.append(c)
                next_label += 1
                stack.append(child)
        else:
            for child, c in ((left, cl), (right, cr)):
                if c >= min_cluster_size:
                    relabel[child] = me
                    stack.append(child)
                else:
                    for p in leaves(child):
                        parents.append(me)
                        kids.append(p)
                        lambdas.append(lam)
                        sizes.append(1)
    return parents, kids, lambdas, sizes


def _select_clusters(parents, kids, lambdas, sizes, n):
    parents = np.asarray(parents)
    kids = np.asarray(kids)
    lambdas = np.asarray(lambdas, dtype=float)
    sizes = np.asarray(sizes)
    n_nodes = int(max(kids.max(), parents.max())) + 1 if len(kids) else n + 1
    birth = np.zeros(n_nodes)
    is_cluster_row = kids >= n
    birth[kids[is_cluster_row]] = lambdas[is_cluster_row]
    stability = np.zeros(n_nodes)
    np.add.at(stability, parents, (lambdas - birth[parents]) * sizes)
    cluster_ids = list(range(n, n_nodes))
    child_clusters = {c: [] for c in cluster_ids}
    for p, k in zip(parents[is_cluster_row], kids[is_cluster_row]):
        child_clusters[int(p)].append(int(k))

    selected = {c: False for c in cluster_ids}
    if not child_clusters[n]:
        selected[n] = True
        return selected, child_clusters, parents, kids
    subtree = stability.copy()
    # children always carry larger ids than their parent
    for c in sorted(cluster_ids, reverse=True):
        if c == n:
            continue
        kids_c = child_clusters[c]
        child_sum = sum(subtree[k] for k in kids_c)
        if kids_c and child_sum >= stability[c]:
            subtree[c] = child_sum
        else:
            selected[c] = True
            subtree[c] = stability[c]
            stack = list(kids_c)
            while stack:
                k = stack.pop()
                selected[k] = False
                stack.extend(child_clusters[k])
    return selected, child_clusters, parents, kids


def _labels(selected, child_clusters, parents, kids, n):
    parent_of = {int(k): int(p) for p, k in zip(parents, kids)}
    chosen = [c for c, s in selected.items() if s]
    labels = np.full(n, NOISE, dtype=np.int64)
    if chosen == [n]:
        labels[:] = 0
        return labels, 1
    label_of = {c: i for i, c in enumerate(chosen)}
    resolved: dict[int, int] = {}

    def owner(c):
        path = []
        while c not in resolved:
            if c in label_of:
                resolved[c] = label_of[c]
                break
            if c == n:
                resolved[c] = NOISE
                break
            path.append(c)
            c = parent_of[c]
        for p in path:
            resolved[p] = resolved[c]
        return resolved[c]

    for p in range(n):
        labels[p] = owner(parent_of[p])
    return labels, len(chosen)


def hdbscan_1d(points, min_cluster_size: int = 50, min_samples: int | None = None) -> Clustering:
    """Cluster 1-D points. Cluster ids are ordered by each cluster's smallest value."""
    x = np.asarray(points, dtype=float).ravel()
    n = len(x)
    if min_samples is None:
        min_samples = min_cluster_size
    if min_cluster_size < 2:
        raise ValueError("min_cluster_size must be >= 2")
    if min_samples < 1:
        raise ValueError("min_samples must be >= 1")
    if n < min_cluster_size:
        raise TooFewPoints(f"{n} points, min_cluster_size {min_cluster_size}")
    order = np.argsort(x, kind="mergesort")
    xs = x[order]
    core = core_distances(xs, min_samples)
    edges = mst_prim(xs, core)
    link = single_linkage(edges, n)
    tree = condense_tree(link, n, min_cluster_size)
    selected, child_clusters, parents, kids = _select_clusters(*tree, n)
    sorted_labels, k = _labels(selected, child_clusters, parents, kids, n)
    # sorted order -> ids already increase with cluster minimum; make them contiguous in that order
    remap, nxt = {}, 0
    for lab in sorted_labels:
        if lab != NOISE and lab not in remap:
            remap[lab] = nxt
            nxt += 1
    canon = np.array([remap.get(l, NOISE) for l in sorted_labels], dtype=np.int64)
    labels = np.empty(n, dtype=np.int64)
    labels[order] = canon
    return Clustering(labels, nxt, min_cluster_size, min_samples)
