"""Shared test utilities: independent oracles the suite checks the library against.

Everything here deliberately avoids the library's own traversal helpers —
adjacency is rebuilt straight from the raw edge rows so that ball/BFS
comparisons are genuinely two-route.
"""

from collections import deque

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components


def edge_adjacency(h):
    """Plain dict-of-sets adjacency rebuilt from the raw (u, v, label) rows."""
    adj = {v: set() for v in range(h.n)}
    for u, v, _label in h.edges:
        adj[int(u)].add(int(v))
        adj[int(v)].add(int(u))
    return adj


def bfs_ball(adj, src, radius):
    """Set of nodes within `radius` hops of src, by textbook BFS."""
    seen = {src}
    frontier = deque([(src, 0)])
    while frontier:
        node, dist = frontier.popleft()
        if dist == radius:
            continue
        for nxt in adj[node]:
            if nxt not in seen:
                seen.add(nxt)
                frontier.append((nxt, dist + 1))
    return seen


def assert_hamiltonian_decomposition(h):
    """Each edge label must form one spanning cycle: 2-regular and connected."""
    n, d = h.n, h.d
    edges = np.asarray(h.edges)
    assert edges.shape == (n * d // 2, 3)
    labels = edges[:, 2]
    assert labels.min() >= 1 and labels.max() <= d // 2
    for label in range(1, d // 2 + 1):
        rows = edges[labels == label]
        assert rows.shape[0] == n, f"label {label}: expected {n} edges"
        endpoints = np.concatenate([rows[:, 0], rows[:, 1]])
        counts = np.bincount(endpoints, minlength=n)
        assert np.all(counts == 2), f"label {label}: not 2-regular"
        ones = np.ones(rows.shape[0], dtype=np.int8)
        mat = coo_matrix((ones, (rows[:, 0], rows[:, 1])), shape=(n, n))
        n_comp, _ = connected_components(mat, directed=False)
        assert n_comp == 1, f"label {label}: {n_comp} components, expected one cycle"


def sample_flood_maxima(n, trials, *, seed_offset=0):
    """Per-trial max of n geometric(1/2) draws, using the baseline's exact
    per-trial generator derivation so the values equal what the flood
    protocol would converge to."""
    from byzcount.rng import stream

    maxima = np.empty(trials, dtype=np.int64)
    for t in range(trials):
        rng = stream(t + seed_offset, "trial", 0)
        maxima[t] = rng.geometric(0.5, size=n).max()
    return maxima
