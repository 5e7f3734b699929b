"""Independent reference implementations used as test oracles."""

from __future__ import annotations

from collections import deque

import numpy as np

NOISE = -1


def boarding_event_loop(trains, stations, arrivals):
    """Per-rider FIFO boarding driven by a single time-ordered event queue.

    ``trains`` is a list of (departures dict, capacity). Every stop must come
    after the same train's stop at the previous station. Returns
    ``(rows, assignment)`` where rows map (train, station) to
    (d, r, l, room) and assignment maps station to the train position per
    rider in sorted-arrival order (-1 if never boarded).
    """
    events = []
    for s in stations:
        for j, t in enumerate(sorted(arrivals.get(s, []))):
            events.append((int(t), 0, s, j))          # riders join before a same-second departure
    for i, (deps, _) in enumerate(trains):
        for s, t in deps.items():
            events.append((int(t), 1, s, i))
    events.sort(key=lambda e: (e[0], e[1], stations.index(e[2]), e[3]))

    queues = {s: deque() for s in stations}
    fresh = {s: 0 for s in stations}
    room = [cap for _, cap in trains]
    assignment = {s: [-1] * len(arrivals.get(s, [])) for s in stations}
    rows = {}
    for _, kind, s, x in events:
        if kind == 0:
            queues[s].append(x)
            fresh[s] += 1
            continue
        q = queues[s]
        r = len(q)
        board = min(room[x], r)
        for _ in range(board):
            assignment[s][q.popleft()] = x
        rows[(x, s)] = (fresh[s], r, r - board, room[x])
        room[x] -= board
        fresh[s] = 0
    return rows, {s: np.array(v, dtype=np.int64) for s, v in assignment.items()}


def brute_hdbscan(x, min_cluster_size):
    """Dense O(n^2) HDBSCAN with excess-of-mass selection.

    Builds the full mutual-reachability matrix, merges with Kruskal in a
    stable weight order, and walks the dendrogram recursively. Equal weights
    are merged in pair-index order, so feed sorted values to reproduce the
    left-to-right tie order of the production code. The root is never
    selected. Returns labels with -1 for noise.
    """
    mcs = min_cluster_size
    x = np.asarray(x, dtype=float)
    n = len(x)
    dist = np.abs(x[:, None] - x[None, :])
    core = np.sort(dist, axis=1)[:, mcs - 1]
    mreach = np.maximum(dist, np.maximum(core[:, None], core[None, :]))
    iu, ju = np.triu_indices(n, 1)
    w = mreach[iu, ju]

    uf = list(range(n))

    def find(a):
        while uf[a] != a:
            uf[a] = uf[uf[a]]
            a = uf[a]
        return a

    node_of = {i: i for i in range(n)}
    kids, height, size = {}, {}, {i: 1 for i in range(n)}
    nxt = n
    for e in np.argsort(w, kind="mergesort"):
        ra, rb = find(iu[e]), find(ju[e])
        if ra == rb:
            continue
        a, b = node_of[ra], node_of[rb]
        kids[nxt], height[nxt], size[nxt] = (a, b), w[e], size[a] + size[b]
        uf[rb] = ra
        node_of[ra] = nxt
        nxt += 1

    def leaves(v):
        return [v] if v < n else leaves(kids[v][0]) + leaves(kids[v][1])

    clusters = []  # dicts: birth, pts {point: lambda out}, children

    def grow(node, birth):
        cid = len(clusters)
        clusters.append({"birth": birth, "pts": {}, "children": []})
        stack = [node]
        while stack:
            v = stack.pop()
            if v < n:
                clusters[cid]["pts"][v] = birth
                continue
            lam = np.inf if height[v] == 0 else 1.0 / height[v]
            pair = kids[v]
            if all(size[c] >= mcs for c in pair):
                for c in pair:
                    clusters[cid]["children"].append(grow(c, lam))
                continue
            for c in pair:
                if size[c] >= mcs:
                    stack.append(c)
                else:
                    for p in leaves(c):
                        clusters[cid]["pts"][p] = lam
        return cid

    grow(nxt - 1, 0.0)

    def members(c):
        out = list(clusters[c]["pts"])
        for ch in clusters[c]["children"]:
            out += members(ch)
        return out

    def stability(c):
        b = clusters[c]["birth"]
        s = sum(lp - b for lp in clusters[c]["pts"].values())
        for ch in clusters[c]["children"]:
            s += (clusters[ch]["birth"] - b) * len(members(ch))
        return s

    def choose(c):
        if not clusters[c]["children"]:
            return stability(c), [c]
        total, chosen = 0.0, []
        for ch in clusters[c]["children"]:
            s, cs = choose(ch)
            total += s
            chosen += cs
        own = stability(c)
        if c != 0 and own > total:
            return own, [c]
        return total, chosen

    labels = np.full(n, NOISE)
    _, chosen = choose(0)
    if chosen == [0]:
        return labels
    for k, c in enumerate(chosen):
        labels[members(c)] = k
    return labels


def canonical(labels, x):
    """Relabel clusters by their smallest member value; noise stays -1."""
    order = np.argsort(x, kind="mergesort")
    mapping = {}
    for lab in labels[order]:
        if lab != NOISE and lab not in mapping:
            mapping[lab] = len(mapping)
    return np.array([mapping.get(lab, NOISE) for lab in labels])


def mixture(rng, continuous=False):
    k = int(rng.integers(1, 5))
    parts = [rng.normal(rng.uniform(0, 5000), rng.uniform(20, 120), rng.integers(20, 120)) for _ in range(k)]
    x = np.concatenate(parts)
    return x if continuous else np.round(x)
