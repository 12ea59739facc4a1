"""Propagation operators and polynomial graph filters.

An operator is a sparse n-by-n matrix built from a graph's adjacency
pattern.  Four kinds are supported:

* ``sym_norm``  -- D^{-1/2} A D^{-1/2}
* ``row_norm``  -- D^{-1} A (row stochastic)
* ``raw_adj``   -- 0/1 adjacency values (sum aggregation)
* ``neigh_avg`` -- alias of ``row_norm``; by convention built on a graph
  that carries self-loops, so each row averages a node with its neighbors

Degrees are always computed from the graph exactly as stored, so whether a
self-loop participates is decided by the caller when building the graph.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import DegeneracyError
from .graph import SparseGraph

OPERATOR_KINDS = ("sym_norm", "row_norm", "raw_adj", "neigh_avg")
_NORMALIZED = ("sym_norm", "row_norm", "neigh_avg")


@dataclass(frozen=True)
class PropagationOperator:
    """Sparse row-major (CSR) propagation matrix plus its kind tag."""

    matrix: sp.csr_matrix
    kind: str

    def __post_init__(self):
        m = self.matrix
        if m.shape[0] != m.shape[1]:
            raise ValueError(f"operator must be square, got {m.shape}")
        if self.kind not in OPERATOR_KINDS:
            raise ValueError(f"unknown operator kind {self.kind!r}")
        if m.nnz and not np.isfinite(m.data).all():
            raise ValueError("operator values must be finite")

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def nnz(self) -> int:
        return self.matrix.nnz

    def row_nnz_max(self) -> int:
        """Maximum number of stored nonzeros in any row."""
        return int(np.diff(self.matrix.indptr).max()) if self.n else 0

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()

    def transpose_csr(self) -> sp.csr_matrix:
        return self.matrix.T.tocsr()


@dataclass(frozen=True)
class FilterCoefficients:
    """Coefficients theta_1..theta_k of a degree-k polynomial filter,
    each bounded by ``beta`` in absolute value."""

    theta: np.ndarray
    beta: float = 1.0

    def __post_init__(self):
        theta = np.ascontiguousarray(self.theta, dtype=np.float64)
        theta.flags.writeable = False
        object.__setattr__(self, "theta", theta)
        if theta.ndim != 1 or theta.size < 1:
            raise ValueError("theta must be a nonempty vector")
        if not np.isfinite(theta).all():
            raise ValueError("theta must be finite")
        if self.beta <= 0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        if np.abs(theta).max() > self.beta + 1e-15:
            raise ValueError(
                f"|theta| exceeds beta={self.beta}: max={np.abs(theta).max()}")

    @property
    def k(self) -> int:
        return self.theta.size


def _adjacency_csr_pattern(g: SparseGraph):
    degs = g.degrees
    indptr = np.concatenate(([0], np.cumsum(degs)))
    if g.n and degs.sum():
        indices = np.concatenate(g.adjacency)
    else:
        indices = np.empty(0, dtype=np.int64)
    return indptr.astype(np.int64), indices


def propagation_operator(g: SparseGraph, kind: str,
                         allow_isolated: bool = False) -> PropagationOperator:
    """Build the propagation operator of the given kind from g.

    Normalized kinds require every node to have degree >= 1 (guaranteed when
    g carries self-loops).  ``allow_isolated=True`` relaxes this by giving
    zero-degree nodes an all-zero row instead of raising; it exists for
    no-self-loop normalized operators on graphs that may contain isolated
    nodes.
    """
    if kind not in OPERATOR_KINDS:
        raise ValueError(f"unknown operator kind {kind!r}")
    if g.n <= 0:
        raise ValueError("graph must be nonempty")
    degs = g.degrees.astype(np.float64)
    if kind in _NORMALIZED and not allow_isolated:
        zero = np.flatnonzero(g.degrees == 0)
        if zero.size:
            raise DegeneracyError(
                f"node {int(zero[0])} has degree 0; kind {kind!r} "
                f"requires positive degree (add self-loops or drop the node)")

    indptr, indices = _adjacency_csr_pattern(g)
    if kind == "raw_adj":
        data = np.ones(indices.size, dtype=np.float64)
    elif kind in ("row_norm", "neigh_avg"):
        with np.errstate(divide="ignore"):
            inv = np.where(degs > 0, 1.0 / np.maximum(degs, 1.0), 0.0)
        data = np.repeat(inv, g.degrees)
    else:  # sym_norm
        with np.errstate(divide="ignore"):
            inv_sqrt = np.where(degs > 0, 1.0 / np.sqrt(np.maximum(degs, 1.0)), 0.0)
        data = np.repeat(inv_sqrt, g.degrees) * inv_sqrt[indices]
    mat = sp.csr_matrix((data, indices, indptr), shape=(g.n, g.n))
    mat.sort_indices()
    return PropagationOperator(mat, kind)


def identity_operator(n: int) -> PropagationOperator:
    """Identity matrix as a raw_adj operator on a self-loops-only graph."""
    from .graph import build_graph

    return propagation_operator(build_graph(n, [], add_self_loops=True),
                                "raw_adj")


def apply_operator(op: PropagationOperator, X: np.ndarray) -> np.ndarray:
    """Sparse-dense product op @ X."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] != op.n:
        raise ValueError(
            f"dimension mismatch: operator is {op.n}x{op.n}, X has "
            f"{X.shape[0]} rows")
    return op.matrix @ X


def polynomial_propagate(op: PropagationOperator, coeffs: FilterCoefficients,
                         X: np.ndarray) -> np.ndarray:
    """Evaluate sum_j theta_j op^j X by iterated products.

    Powers of the operator are never materialized; cost is
    O(k * nnz(op) * d).
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    power = X
    out = np.zeros_like(X)
    for theta_j in coeffs.theta:
        power = apply_operator(op, power)
        if theta_j != 0.0:
            out = out + theta_j * power
    return out


def row_sum_norm(op: PropagationOperator) -> float:
    """Maximum over rows of the sum of absolute values."""
    if op.nnz == 0:
        return 0.0
    sums = np.add.reduceat(np.abs(op.matrix.data),
                           op.matrix.indptr[:-1][np.diff(op.matrix.indptr) > 0])
    out = np.zeros(op.n)
    out[np.flatnonzero(np.diff(op.matrix.indptr) > 0)] = sums
    return float(out.max())


def frobenius_distance(a: PropagationOperator, b: PropagationOperator) -> float:
    """sqrt of the summed squared entry differences over the union support."""
    if a.n != b.n:
        raise ValueError(f"dimension mismatch: {a.n} vs {b.n}")
    diff = (a.matrix - b.matrix).tocsr()
    if diff.nnz == 0:
        return 0.0
    return float(np.sqrt(np.sum(diff.data**2)))
