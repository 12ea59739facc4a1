"""Shared oracle helpers for the test suite.

Everything here is deliberately brute force and independent of the package
internals it checks: dense matrix powers, exhaustive nearest-neighbor
search, and finite differences.
"""

import numpy as np
import pytest

from gnnreg import build_graph, propagation_operator
from gnnreg.operators import OPERATOR_KINDS


def random_connected_graph(rng, n, extra_edges=2, self_loops=True):
    """Random spanning-tree-plus-chords graph; degree >= 1 everywhere."""
    edges = [(int(rng.integers(0, i)), i) for i in range(1, n)]
    for _ in range(extra_edges):
        u, v = rng.integers(0, n, size=2)
        if u != v:
            edges.append((int(u), int(v)))
    return build_graph(n, edges, add_self_loops=self_loops)


def random_operator(rng, n, kind=None, self_loops=True):
    kind = kind or OPERATOR_KINDS[rng.integers(0, len(OPERATOR_KINDS))]
    g = random_connected_graph(rng, n, extra_edges=int(rng.integers(0, n)),
                               self_loops=self_loops)
    return propagation_operator(g, kind)


def dense_power_sum_support(mat: np.ndarray, depth: int) -> np.ndarray:
    """Boolean support of |M| + |M|^2 + ... + |M|^depth, densely."""
    acc = np.zeros_like(mat, dtype=bool)
    power = np.eye(mat.shape[0])
    for _ in range(depth):
        power = power @ mat
        acc |= power != 0
    return acc


def brute_force_knn_edges(points: np.ndarray, k: int):
    """Union-symmetrized k-NN edge set with (distance, id) tie-breaking."""
    n = len(points)
    edges = set()
    for i in range(n):
        d2 = ((points - points[i]) ** 2).sum(axis=1)
        order = sorted((float(d2[j]), j) for j in range(n) if j != i)
        for _, j in order[:k]:
            edges.add((min(i, j), max(i, j)))
    return edges


def finite_difference_gradient(loss_fn, arrays, h=1e-6):
    """Central differences of a scalar function of a list of arrays."""
    grads = []
    for arr in arrays:
        g = np.zeros_like(arr)
        it = np.nditer(arr, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            old = arr[idx]
            arr[idx] = old + h
            up = loss_fn()
            arr[idx] = old - h
            down = loss_fn()
            arr[idx] = old
            g[idx] = (up - down) / (2 * h)
        grads.append(g)
    return grads


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
