"""Sparse small-world expander topologies.

The base communication graph H is a d-regular multigraph on n nodes built as
the union of d/2 uniformly random Hamiltonian cycles.  A small-world layer L
connects every pair of nodes at H-distance at most k = ceil(d/3); the full
graph G = H + L is what Byzantine-tolerant runs communicate over.

This module owns everything structural: generation, the L augmentation,
ball/boundary queries, the locally-tree-like census, node classification
relative to a Byzantine placement, Byzantine chain search, a spectral
expansion estimate, and a plain-text serialization format.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .rng import stream

__all__ = [
    "HMultigraph",
    "Topology",
    "NodeClassification",
    "SpectralEstimate",
    "PowerIterationError",
    "generate_h_graph",
    "derive_node_ids",
    "default_k",
    "default_tree_radius",
    "default_a_radius",
    "augment_small_world",
    "ball",
    "boundary",
    "g_ball",
    "reach_within",
    "full_tree_ball_size",
    "is_locally_tree_like",
    "census_locally_tree_like",
    "classify_nodes",
    "place_byzantine",
    "longest_byzantine_chain",
    "count_parallel_pairs",
    "estimate_spectral_gap",
    "save_topology",
    "load_topology",
]


# ---------------------------------------------------------------------------
# containers
# ---------------------------------------------------------------------------


@dataclass
class HMultigraph:
    """d-regular multigraph given by its Hamiltonian-cycle edge list.

    Attributes
    ----------
    n, d : int
        Node count and (target) degree.  Generated graphs are exactly
        d-regular; hand-built fixtures may deviate (``check=False``).
    edges : np.ndarray
        Shape (m, 3) int64 array of rows ``(u, v, cycle_label)`` with
        labels in 1..d/2.  Parallel edges appear as repeated (u, v) rows.
    ids : np.ndarray
        Shape (n,) uint64 array of distinct node identifiers drawn from the
        full 64-bit space; their width carries no information about n.
    seed : int
        Seed the graph (and its ids) were derived from.
    """

    n: int
    d: int
    edges: np.ndarray
    ids: np.ndarray
    seed: int = 0
    # CSR-style adjacency, built once in __post_init__.
    arc_ptr: np.ndarray = field(init=False, repr=False)
    arc_dst: np.ndarray = field(init=False, repr=False)
    arc_label: np.ndarray = field(init=False, repr=False)
    simple_ptr: np.ndarray = field(init=False, repr=False)
    simple_idx: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 3)
        src = np.concatenate([self.edges[:, 0], self.edges[:, 1]])
        dst = np.concatenate([self.edges[:, 1], self.edges[:, 0]])
        lab = np.concatenate([self.edges[:, 2], self.edges[:, 2]])
        order = np.lexsort((dst, src))
        src, dst, lab = src[order], dst[order], lab[order]
        self.arc_ptr = np.zeros(self.n + 1, dtype=np.int64)
        np.add.at(self.arc_ptr, src + 1, 1)
        np.cumsum(self.arc_ptr, out=self.arc_ptr)
        self.arc_dst = dst
        self.arc_label = lab
        # deduplicated neighbor lists for distance queries
        keep = np.ones(len(src), dtype=bool)
        keep[1:] = (src[1:] != src[:-1]) | (dst[1:] != dst[:-1])
        s_src, s_dst = src[keep], dst[keep]
        self.simple_ptr = np.zeros(self.n + 1, dtype=np.int64)
        np.add.at(self.simple_ptr, s_src + 1, 1)
        np.cumsum(self.simple_ptr, out=self.simple_ptr)
        self.simple_idx = s_dst

    @classmethod
    def from_edges(cls, n: int, d: int, edges, seed: int = 0, check: bool = False) -> "HMultigraph":
        """Wrap an explicit edge list; ``check=True`` enforces d-regularity."""
        g = cls(n=n, d=d, edges=np.asarray(edges, dtype=np.int64).reshape(-1, 3),
                ids=derive_node_ids(n, seed), seed=seed)
        if check:
            degs = np.diff(g.arc_ptr)
            if not np.all(degs == d):
                raise ValueError("edge list is not d-regular")
            labels = g.edges[:, 2]
            if labels.size and (labels.min() < 1 or labels.max() > max(d // 2, 1)):
                raise ValueError("cycle labels out of range")
        return g

    def neighbors(self, v: int) -> np.ndarray:
        """Neighbors of v with multiplicity (one entry per incident edge)."""
        return self.arc_dst[self.arc_ptr[v]:self.arc_ptr[v + 1]]

    def simple_neighbors(self, v: int) -> np.ndarray:
        """Distinct neighbors of v, sorted."""
        return self.simple_idx[self.simple_ptr[v]:self.simple_ptr[v + 1]]

    def degree(self, v: int) -> int:
        return int(self.arc_ptr[v + 1] - self.arc_ptr[v])

    def adjacency(self, weighted: bool = True) -> sp.csr_matrix:
        """Sparse adjacency matrix; weights are edge multiplicities."""
        m = self.edges.shape[0]
        data = np.ones(2 * m, dtype=np.float64)
        rows = np.concatenate([self.edges[:, 0], self.edges[:, 1]])
        cols = np.concatenate([self.edges[:, 1], self.edges[:, 0]])
        a = sp.csr_matrix((data, (rows, cols)), shape=(self.n, self.n))
        if not weighted:
            a.data[:] = 1.0
        return a


@dataclass
class Topology:
    """H plus its small-world layer.

    ``l_ptr``/``l_idx`` is a CSR table whose row v lists every node at
    H-distance in [1, k] from v, sorted.  Because H-neighbors are at
    distance 1 <= k, this row is exactly v's neighborhood in G.
    """

    h: HMultigraph
    k: int
    l_ptr: np.ndarray = field(repr=False)
    l_idx: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return self.h.n

    def l_neighbors(self, v: int) -> np.ndarray:
        """Nodes at H-distance in [1, k] from v (== v's G-neighborhood)."""
        return self.l_idx[self.l_ptr[v]:self.l_ptr[v + 1]]

    def g_degree(self, v: int) -> int:
        return int(self.l_ptr[v + 1] - self.l_ptr[v])


@dataclass
class NodeClassification:
    """Boolean masks partitioning the node set relative to a placement.

    ``bad = byz | nlt`` and ``bus`` collects every node within G-distance
    ``a_radius`` of a bad node (bad nodes included); ``byz_safe`` is its
    complement.  ``nlt`` is judged at ``tree_radius``.
    """

    byz: np.ndarray
    ltl: np.ndarray
    bus: np.ndarray
    a_radius: int
    tree_radius: int

    @property
    def honest(self) -> np.ndarray:
        return ~self.byz

    @property
    def nlt(self) -> np.ndarray:
        return ~self.ltl

    @property
    def bad(self) -> np.ndarray:
        return self.byz | self.nlt

    @property
    def unsafe(self) -> np.ndarray:
        return self.bus & ~self.bad

    @property
    def byz_safe(self) -> np.ndarray:
        return ~self.bus


class PowerIterationError(RuntimeError):
    """Raised when the spectral estimate fails to converge."""


@dataclass
class SpectralEstimate:
    """Second eigenvalue magnitude and the expansion bound derived from it."""

    lambda2: float
    h_lower: float
    iterations: int


# ---------------------------------------------------------------------------
# generation
# ---------------------------------------------------------------------------


def derive_node_ids(n: int, seed: int) -> np.ndarray:
    """Draw n distinct uint64 identifiers, deterministically from the seed."""
    rng = stream(seed, "ids")
    ids = rng.integers(0, 2**64, size=n, dtype=np.uint64)
    while np.unique(ids).size < n:  # astronomically unlikely for sane n
        dup = np.ones(n, dtype=bool)
        _, first = np.unique(ids, return_index=True)
        dup[first] = False
        ids[dup] = rng.integers(0, 2**64, size=int(dup.sum()), dtype=np.uint64)
    return ids


def generate_h_graph(n: int, d: int, seed: int) -> HMultigraph:
    """Sample H(n, d): the union of d/2 uniform random Hamiltonian cycles.

    Each cycle is an independent uniform circular permutation of the node
    set; parallel edges between cycles are kept and labelled by cycle.

    Parameters
    ----------
    n : int
        Number of nodes, at least 3.
    d : int
        Even degree, at least 2.  The counting protocol itself wants
        d >= 8; smaller even degrees are allowed here for fixtures.
    seed : int
        Root seed; the same seed always yields the same graph and ids.
    """
    if n < 3:
        raise ValueError("n must be at least 3")
    if d < 2 or d % 2 != 0:
        raise ValueError("d must be an even integer >= 2")
    rng = stream(seed, "graph")
    rows = []
    for c in range(1, d // 2 + 1):
        perm = rng.permutation(n)
        nxt = np.roll(perm, -1)
        lab = np.full(n, c, dtype=np.int64)
        rows.append(np.column_stack([perm, nxt, lab]))
    edges = np.concatenate(rows, axis=0)
    return HMultigraph(n=n, d=d, edges=edges, ids=derive_node_ids(n, seed), seed=seed)


def default_k(d: int) -> int:
    """Small-world reach: k = ceil(d/3)."""
    return -(-d // 3)


def default_tree_radius(n: int, d: int) -> int:
    """Census radius used for classification: max(1, floor(log2 n / (10 log2 d)))."""
    return max(1, int(math.log2(n) // (10 * math.log2(d))))


def default_a_radius(n: int, d: int, k: int, delta: float) -> int:
    """Safety margin around bad nodes: ceil(a log2 n), a = delta/(10 k log2(d-1)), min 1."""
    if d <= 2:  # log2(d-1) = 0; the >=1 clamp is all that is left
        return 1
    a = delta / (10.0 * k * math.log2(d - 1))
    return max(1, math.ceil(a * math.log2(n)))


def augment_small_world(h: HMultigraph, k: int | None = None) -> Topology:
    """Attach the small-world layer: all pairs at H-distance <= k.

    Parameters
    ----------
    h : HMultigraph
    k : int, optional
        Reach of the layer; defaults to ceil(d/3).

    Returns
    -------
    Topology
        Holds h, k and the per-node G-neighborhood table.
    """
    if k is None:
        k = default_k(h.d)
    if k < 1:
        raise ValueError("k must be >= 1")
    n = h.n
    a = sp.csr_matrix(
        (np.ones(len(h.simple_idx), dtype=bool),
         h.simple_idx,
         h.simple_ptr.astype(np.int64)),
        shape=(n, n),
    )
    reach = a + sp.identity(n, dtype=bool, format="csr")
    closure = reach
    for _ in range(k - 1):
        closure = (closure @ reach).astype(bool)
    closure = closure.tocsr()
    closure.setdiag(False)
    closure.eliminate_zeros()
    closure.sort_indices()
    return Topology(h=h, k=k, l_ptr=closure.indptr.astype(np.int64),
                    l_idx=closure.indices.astype(np.int64))


# ---------------------------------------------------------------------------
# distance queries
# ---------------------------------------------------------------------------


def _bfs_levels(h: HMultigraph, v: int, r: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes within H-distance r of v and their distances (BFS on simple adjacency)."""
    dist = {v: 0}
    frontier = [v]
    for depth in range(1, r + 1):
        nxt = []
        for u in frontier:
            for w in h.simple_neighbors(u):
                w = int(w)
                if w not in dist:
                    dist[w] = depth
                    nxt.append(w)
        frontier = nxt
        if not frontier:
            break
    nodes = np.fromiter(dist.keys(), dtype=np.int64, count=len(dist))
    depths = np.fromiter(dist.values(), dtype=np.int64, count=len(dist))
    order = np.argsort(nodes)
    return nodes[order], depths[order]


def ball(h: HMultigraph, v: int, r: int) -> np.ndarray:
    """Sorted nodes at H-distance <= r from v, v included (B(v, r))."""
    if r < 0:
        raise ValueError("radius must be >= 0")
    nodes, _ = _bfs_levels(h, v, r)
    return nodes


def boundary(h: HMultigraph, v: int, r: int) -> np.ndarray:
    """Sorted nodes at H-distance exactly r from v (Bd(v, r))."""
    if r < 0:
        raise ValueError("radius must be >= 0")
    nodes, depths = _bfs_levels(h, v, r)
    return nodes[depths == r]


def g_ball(topo: Topology, v: int, tau: int) -> np.ndarray:
    """Nodes at G-distance <= tau from v.

    G-distance reduces to H-distance: dist_G(u, v) <= tau iff
    dist_H(u, v) <= k * tau, since every G-hop spans at most k H-hops and
    any H-path splits into segments of length <= k.
    """
    return ball(topo.h, v, topo.k * tau)


def reach_within(h: HMultigraph, sources: np.ndarray, depth: int) -> np.ndarray:
    """Boolean mask of nodes within H-distance ``depth`` of any source."""
    mask = np.zeros(h.n, dtype=bool)
    sources = np.asarray(sources, dtype=np.int64)
    mask[sources] = True
    frontier = sources
    for _ in range(depth):
        if frontier.size == 0:
            break
        # gather all simple neighbors of the frontier
        counts = h.simple_ptr[frontier + 1] - h.simple_ptr[frontier]
        total = int(counts.sum())
        if total == 0:
            break
        out = np.empty(total, dtype=np.int64)
        pos = 0
        for u in frontier:
            row = h.simple_idx[h.simple_ptr[u]:h.simple_ptr[u + 1]]
            out[pos:pos + len(row)] = row
            pos += len(row)
        fresh = out[~mask[out]]
        if fresh.size == 0:
            break
        mask[fresh] = True
        frontier = np.unique(fresh)
    return mask


# ---------------------------------------------------------------------------
# tree-likeness
# ---------------------------------------------------------------------------


def full_tree_ball_size(d: int, r: int) -> int:
    """Size of B(v, r) when the ball is a full (d-1)-ary tree: 1 + d*sum (d-1)^(j-1)."""
    return 1 + d * sum((d - 1) ** (j - 1) for j in range(1, r + 1))


def is_locally_tree_like(h: HMultigraph, w: int, r: int) -> bool:
    """True iff B(w, r) induces a full (d-1)-ary tree of depth r.

    Checked as: the ball has the full tree size for degree h.d, and the
    induced subgraph (edge multiplicities counted) has exactly |B|-1 edges.
    """
    if r < 1:
        raise ValueError("radius must be >= 1")
    nodes, _ = _bfs_levels(h, w, r)
    if len(nodes) != full_tree_ball_size(h.d, r):
        return False
    members = set(int(x) for x in nodes)
    induced = 0
    for u in members:
        for x in h.neighbors(u):
            if int(x) in members:
                induced += 1
    if induced % 2 != 0:  # self-loop; certainly not a tree
        return False
    return induced // 2 == len(nodes) - 1


def census_locally_tree_like(h: HMultigraph, r: int) -> np.ndarray:
    """Per-node tree-likeness mask at radius r.

    The r=1 case runs vectorized (distinct-degree check plus a sparse
    triangle count); larger radii fall back to the per-node check.
    """
    if r == 1:
        simple_deg = np.diff(h.simple_ptr)
        a = sp.csr_matrix(
            (np.ones(len(h.simple_idx), dtype=np.float64),
             h.simple_idx, h.simple_ptr.astype(np.int64)),
            shape=(h.n, h.n),
        )
        paths2 = a @ a
        tri = np.asarray(a.multiply(paths2).sum(axis=1)).ravel()
        return (simple_deg == h.d) & (tri == 0)
    return np.array([is_locally_tree_like(h, v, r) for v in range(h.n)], dtype=bool)


# ---------------------------------------------------------------------------
# Byzantine placement and classification
# ---------------------------------------------------------------------------


def place_byzantine(n: int, delta: float, seed: int) -> np.ndarray:
    """Pick floor(n^(1-delta)) distinct nodes uniformly at random, sorted.

    delta close to 1 means few Byzantine nodes; delta must lie in (0, 1].
    The protocol-level requirement delta > 3/d is enforced by run
    configuration, not here.
    """
    if not 0.0 < delta <= 1.0:
        raise ValueError("delta must lie in (0, 1]")
    count = int(math.floor(n ** (1.0 - delta)))
    rng = stream(seed, "placement")
    picks = rng.choice(n, size=count, replace=False)
    return np.sort(picks.astype(np.int64))


def classify_nodes(
    topo: Topology,
    byz: np.ndarray,
    a_radius: int | None = None,
    tree_radius: int | None = None,
    delta: float | None = None,
) -> NodeClassification:
    """Partition nodes into the safety classes used by the analysis.

    Parameters
    ----------
    topo : Topology
    byz : np.ndarray
        Indices (or boolean mask) of Byzantine nodes.
    a_radius : int, optional
        G-distance margin defining the blast radius around bad nodes.
        Defaults to ceil(a log2 n) with a = delta/(10 k log2(d-1)),
        clamped to >= 1; requires ``delta`` when defaulted.
    tree_radius : int, optional
        Census radius; defaults to max(1, floor(log2 n / (10 log2 d))).

    Returns
    -------
    NodeClassification
        Masks byz / ltl / bus plus the derived views (honest, nlt, bad,
        unsafe, byz_safe).
    """
    h, n, k = topo.h, topo.n, topo.k
    byz = np.asarray(byz)
    byz_mask = byz.astype(bool) if byz.dtype == np.bool_ else _mask_from_idx(n, byz)
    if tree_radius is None:
        tree_radius = default_tree_radius(n, h.d)
    if a_radius is None:
        if delta is None:
            raise ValueError("a_radius defaulting requires delta")
        a_radius = default_a_radius(n, h.d, k, delta)
    ltl = census_locally_tree_like(h, tree_radius)
    bad_idx = np.flatnonzero(byz_mask | ~ltl)
    bus = reach_within(h, bad_idx, k * a_radius)
    return NodeClassification(byz=byz_mask, ltl=ltl, bus=bus,
                              a_radius=a_radius, tree_radius=tree_radius)


def _mask_from_idx(n: int, idx: np.ndarray) -> np.ndarray:
    mask = np.zeros(n, dtype=bool)
    mask[np.asarray(idx, dtype=np.int64)] = True
    return mask


def longest_byzantine_chain(h: HMultigraph, byz: np.ndarray, cap: int | None = None) -> int:
    """Length (node count) of the longest simple H-path inside the Byzantine set.

    Exact DFS over the induced subgraph.  With ``cap`` set, the search
    stops as soon as a path of ``cap`` nodes is found and returns ``cap``,
    meaning "at least cap".  Returns 0 for an empty set.
    """
    byz = np.asarray(byz, dtype=np.int64)
    if byz.size == 0:
        return 0
    byz_set = set(int(b) for b in byz)
    adj = {
        b: [int(x) for x in set(h.simple_neighbors(b)) if int(x) in byz_set and int(x) != b]
        for b in byz_set
    }
    best = 1

    def dfs(node: int, visited: set, length: int) -> int:
        nonlocal best
        best = max(best, length)
        if cap is not None and best >= cap:
            return best
        for nxt in adj[node]:
            if nxt not in visited:
                visited.add(nxt)
                dfs(nxt, visited, length + 1)
                visited.discard(nxt)
                if cap is not None and best >= cap:
                    return best
        return best

    for start in byz_set:
        dfs(start, {start}, 1)
        if cap is not None and best >= cap:
            return cap
    return best


def count_parallel_pairs(h: HMultigraph) -> int:
    """Number of unordered parallel edge pairs: sum over vertex pairs of C(mult, 2)."""
    u = np.minimum(h.edges[:, 0], h.edges[:, 1])
    v = np.maximum(h.edges[:, 0], h.edges[:, 1])
    key = u * np.int64(h.n) + v
    _, counts = np.unique(key, return_counts=True)
    return int((counts * (counts - 1) // 2).sum())


# ---------------------------------------------------------------------------
# spectral estimate
# ---------------------------------------------------------------------------


def estimate_spectral_gap(
    h: HMultigraph,
    iterations: int = 50_000,
    tol: float = 1e-9,
    seed: int = 0,
) -> SpectralEstimate:
    """Estimate the second adjacency eigenvalue and an expansion lower bound.

    Power iteration runs on A + dI (the shift keeps the spectrum
    non-negative, so the iterate converges to the signed second-largest
    eigenvalue instead of the most negative one) and is deflated against
    the all-ones vector every step.  The estimate is declared converged
    when successive Rayleigh quotients of A agree to within ``tol``;
    otherwise PowerIterationError is raised.

    Returns
    -------
    SpectralEstimate
        lambda2 = |second-largest eigenvalue| and the discrete Cheeger
        bound h_lower = (d - lambda2)/2 on the edge expansion.
    """
    n, d = h.n, h.d
    a = h.adjacency(weighted=True)
    rng = stream(seed, "spectral")
    x = rng.standard_normal(n)
    x -= x.mean()
    x /= np.linalg.norm(x)
    prev = np.inf
    for it in range(1, iterations + 1):
        z = a @ x
        ray = float(x @ z)
        if abs(ray - prev) <= tol:
            lam = abs(ray)
            return SpectralEstimate(lambda2=lam, h_lower=(d - lam) / 2.0, iterations=it)
        prev = ray
        y = z + d * x
        y -= y.mean()  # deflate against the all-ones eigenvector
        norm = np.linalg.norm(y)
        if norm == 0.0:
            raise PowerIterationError("iterate vanished under deflation")
        x = y / norm
    raise PowerIterationError(
        f"Rayleigh quotient still moving after {iterations} iterations"
    )


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def save_topology(topo: Topology, path: str) -> None:
    """Write the graph file: header ``n d k seed``, then one ``u v label`` line per H-edge."""
    h = topo.h
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"{h.n} {h.d} {topo.k} {h.seed}\n")
        for u, v, lab in h.edges:
            fh.write(f"{u} {v} {lab}\n")


def load_topology(path: str) -> Topology:
    """Read a graph file back; the L layer is recomputed, ids re-derived from the seed."""
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline().split()
        if len(header) != 4:
            raise ValueError("malformed header: expected 'n d k seed'")
        try:
            n, d, k, seed = (int(x) for x in header)
        except ValueError as exc:
            raise ValueError("malformed header: non-integer field") from exc
        rows = []
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 3:
                raise ValueError(f"malformed edge line {lineno}")
            try:
                rows.append([int(parts[0]), int(parts[1]), int(parts[2])])
            except ValueError as exc:
                raise ValueError(f"malformed edge line {lineno}") from exc
    edges = np.asarray(rows, dtype=np.int64).reshape(-1, 3)
    if edges.size and (edges[:, :2].min() < 0 or edges[:, :2].max() >= n):
        raise ValueError("edge endpoint out of range")
    h = HMultigraph.from_edges(n=n, d=d, edges=edges, seed=seed)
    return augment_small_world(h, k=k)
