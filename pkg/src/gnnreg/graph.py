"""Undirected sparse graphs stored as per-node sorted adjacency lists.

Graphs are immutable after construction: adjacency arrays are materialized
once, sorted, and marked read-only, so instances can be shared freely
across threads and worker processes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree


@dataclass(frozen=True)
class SparseGraph:
    """Undirected graph on ``n`` nodes.

    ``adjacency[i]`` is a sorted, duplicate-free int64 array of neighbor ids;
    symmetry (``j in adjacency[i]`` iff ``i in adjacency[j]``) is a
    construction invariant.  ``self_loops`` records whether every node is its
    own neighbor.
    """

    n: int
    adjacency: tuple
    self_loops: bool = False
    _degrees: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        degs = np.array([len(a) for a in self.adjacency], dtype=np.int64)
        degs.flags.writeable = False
        object.__setattr__(self, "_degrees", degs)

    @property
    def degrees(self) -> np.ndarray:
        """Node degrees, counting a self-loop once."""
        return self._degrees

    @property
    def num_edges(self) -> int:
        """Number of undirected edges (self-loops count once)."""
        loops = self.n if self.self_loops else 0
        return (int(self._degrees.sum()) - loops) // 2 + loops

    def edge_array(self) -> np.ndarray:
        """All edges as an (m, 2) array with u <= v, sorted."""
        pairs = [
            (i, j)
            for i in range(self.n)
            for j in self.adjacency[i]
            if i <= j
        ]
        if not pairs:
            return np.empty((0, 2), dtype=np.int64)
        return np.array(sorted(pairs), dtype=np.int64)

    def without_self_loops(self) -> "SparseGraph":
        if not self.self_loops:
            return self
        adj = tuple(_freeze(a[a != i]) for i, a in enumerate(self.adjacency))
        return SparseGraph(self.n, adj, self_loops=False)

    def with_self_loops(self) -> "SparseGraph":
        if self.self_loops:
            return self
        adj = []
        for i, a in enumerate(self.adjacency):
            adj.append(_freeze(np.unique(np.append(a, i))))
        return SparseGraph(self.n, tuple(adj), self_loops=True)


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.int64)
    a.flags.writeable = False
    return a


def build_graph(n: int, edges, add_self_loops: bool = False) -> SparseGraph:
    """Build a symmetric, deduplicated graph from an edge list.

    Input edges may repeat, list both orientations, or contain self-pairs;
    the result is canonical.  Self-loops appear on every node iff
    ``add_self_loops`` is set, regardless of explicit (u, u) input pairs.
    """
    if n <= 0:
        raise ValueError(f"node count must be positive, got {n}")
    edges = np.asarray(list(edges), dtype=np.int64).reshape(-1, 2)
    if edges.size and (edges.min() < 0 or edges.max() >= n):
        bad = edges[(edges < 0).any(axis=1) | (edges >= n).any(axis=1)][0]
        raise ValueError(f"edge endpoint out of range [0, {n}): {tuple(bad)}")
    neighbors = [[] for _ in range(n)]
    for u, v in edges:
        if u == v:
            continue
        neighbors[u].append(v)
        neighbors[v].append(u)
    adj = []
    for i in range(n):
        ids = neighbors[i]
        if add_self_loops:
            ids = ids + [i]
        adj.append(_freeze(np.unique(np.array(ids, dtype=np.int64))))
    return SparseGraph(n, tuple(adj), self_loops=add_self_loops)


def validate_graph(g: SparseGraph) -> None:
    """Raise if g violates the adjacency invariants (testing aid)."""
    seen = {}
    for i, a in enumerate(g.adjacency):
        if len(a) and (a.min() < 0 or a.max() >= g.n):
            raise ValueError(f"node {i} has out-of-range neighbor")
        if len(np.unique(a)) != len(a) or not np.all(np.diff(a) >= 0):
            raise ValueError(f"node {i} adjacency not sorted/unique")
        if (i in a) != g.self_loops:
            raise ValueError(f"node {i} self-loop does not match flag")
        seen[i] = set(int(x) for x in a)
    for i in range(g.n):
        for j in seen[i]:
            if i not in seen[j]:
                raise ValueError(f"asymmetry: {j} in adj[{i}] but not conversely")


def knn_graph(points, k: int) -> SparseGraph:
    """k-nearest-neighbor graph symmetrized by union.

    The directed relation selects, for every node, its k nearest distinct
    nodes under Euclidean distance; equal distances are broken toward the
    smaller node id.  An undirected edge is kept when either endpoint
    selects the other.  No self-loops.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[:, None]
    n = pts.shape[0]
    if not np.isfinite(pts).all():
        raise ValueError("coordinates must be finite")
    if k < 1:
        raise ValueError(f"neighbor count must be >= 1, got {k}")
    if k >= n:
        raise ValueError(f"need more points than neighbors: k={k}, n={n}")

    if n <= 2048:
        chosen = _knn_select_dense(pts, k)
    else:
        chosen = _knn_select_kdtree(pts, k)

    edges = []
    for i in range(n):
        for j in chosen[i]:
            edges.append((i, int(j)))
    return build_graph(n, edges, add_self_loops=False)


def _knn_select_dense(pts: np.ndarray, k: int):
    d2 = ((pts[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2)
    np.fill_diagonal(d2, np.inf)
    n = pts.shape[0]
    order = np.lexsort((np.broadcast_to(np.arange(n), (n, n)), d2), axis=1)
    return order[:, :k]


def _knn_select_kdtree(pts: np.ndarray, k: int):
    n = pts.shape[0]
    tree = cKDTree(pts)
    slack = min(n, k + 9)
    dist, idx = tree.query(pts, k=slack)
    chosen = []
    for i in range(n):
        d_i, j_i = dist[i], idx[i]
        keep = j_i != i
        d_i, j_i = d_i[keep], j_i[keep]
        order = np.lexsort((j_i, d_i))
        d_i, j_i = d_i[order], j_i[order]
        if len(d_i) > k and d_i[k - 1] == d_i[-1]:
            # tie block may extend past the slack window: fall back to the
            # exact distance row for this node
            row = ((pts - pts[i]) ** 2).sum(axis=1)
            row[i] = np.inf
            full = np.lexsort((np.arange(n), row))
            chosen.append(full[:k])
        else:
            chosen.append(j_i[:k])
    return chosen


def read_edge_list(path, n: int | None = None,
                   add_self_loops: bool = False) -> SparseGraph:
    """Read a whitespace-separated "u v" edge list; '#' starts a comment.

    Ids are 0-based.  When ``n`` is omitted it is inferred as 1 + max id.
    """
    edges = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            body = line.split("#", 1)[0].strip()
            if not body:
                continue
            fields = body.split()
            if len(fields) != 2:
                raise ValueError(
                    f"{path}:{lineno}: expected 'u v', got {body!r}")
            edges.append((int(fields[0]), int(fields[1])))
    if n is None:
        n = 1 + max((max(u, v) for u, v in edges), default=-1)
        if n <= 0:
            raise ValueError(f"{path}: empty edge list and no node count")
    return build_graph(n, edges, add_self_loops=add_self_loops)


def write_edge_list(path, g: SparseGraph) -> None:
    """Write the non-loop edges of g, one "u v" line per edge."""
    base = g.without_self_loops()
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# undirected edge list, 0-based ids\n")
        for u, v in base.edge_array():
            fh.write(f"{u} {v}\n")
