"""Classical graph-smoothing baselines.

Both methods are transductive: they produce one value per node of the
training graph and never consult node features.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .errors import NumericError
from .graph import SparseGraph
from .operators import propagation_operator
from .training import MaskVector


def combinatorial_laplacian(g: SparseGraph) -> sp.csr_matrix:
    """L = D - A of g with self-loops stripped."""
    base = g.without_self_loops()
    adj = propagation_operator(base, "raw_adj").matrix
    degs = np.asarray(adj.sum(axis=1)).ravel()
    return (sp.diags(degs) - adj).tocsr()


def laplacian_energy(g: SparseGraph, f: np.ndarray) -> float:
    """Smoothness diagnostic f' L f / f' f (0.0 for the zero signal)."""
    f = np.asarray(f, dtype=np.float64)
    denom = float(f @ f)
    if denom == 0.0:
        return 0.0
    L = combinatorial_laplacian(g)
    return float(f @ (L @ f)) / denom


def _conjugate_gradient(A: sp.csr_matrix, b: np.ndarray, rtol: float,
                        max_iter: int) -> np.ndarray:
    """CG for symmetric positive (semi)definite systems, zero start."""
    x = np.zeros_like(b)
    r = b.copy()
    p = r.copy()
    rs = float(r @ r)
    b_norm = float(np.sqrt(b @ b))
    if b_norm == 0.0:
        return x
    target = rtol * b_norm
    for _ in range(max_iter):
        if np.sqrt(rs) <= target:
            return x
        Ap = A @ p
        denom = float(p @ Ap)
        if denom <= 0.0:
            break
        alpha = rs / denom
        x += alpha * p
        r -= alpha * Ap
        rs_new = float(r @ r)
        p = r + (rs_new / rs) * p
        rs = rs_new
    if np.sqrt(rs) <= target:
        return x
    raise NumericError(
        f"conjugate gradient stalled: relative residual "
        f"{np.sqrt(rs) / b_norm:.3e} after {max_iter} iterations")


def tikhonov_fit(g: SparseGraph, y: np.ndarray, mask: MaskVector,
                 lam: float) -> np.ndarray:
    """Laplacian-regularized least squares over observed nodes.

    Solves (Diag(omega) + lam * L) f = omega * y by conjugate gradient to
    relative residual 1e-8, capped at 10 n iterations.
    """
    y = np.asarray(y, dtype=np.float64)
    if lam < 0:
        raise ValueError(f"regularization weight must be >= 0, got {lam}")
    omega = mask.omega.astype(np.float64)
    if omega.sum() == 0:
        raise ValueError("mask must observe at least one node")
    if y.shape != omega.shape:
        raise ValueError(f"length mismatch: y {y.shape}, mask {omega.shape}")
    L = combinatorial_laplacian(g)
    A = (sp.diags(omega) + lam * L).tocsr()
    b = omega * y
    return _conjugate_gradient(A, b, rtol=1e-8, max_iter=10 * g.n)


def label_propagation(g: SparseGraph, y: np.ndarray, mask: MaskVector,
                      alpha: float, iters: int = 1000) -> np.ndarray:
    """Iterative harmonic smoothing with observed nodes clamped.

    Each sweep computes f <- alpha * P f + (1 - alpha) * y_masked with P the
    row-normalized self-looped adjacency, then resets observed nodes to
    their labels.  Stops at ``iters`` sweeps or when the largest update
    falls below 1e-9.
    """
    y = np.asarray(y, dtype=np.float64)
    if not 0.0 <= alpha < 1.0:
        raise ValueError(f"retention weight must be in [0, 1), got {alpha}")
    observed = mask.omega
    if not observed.any():
        raise ValueError("mask must observe at least one node")
    P = propagation_operator(g.with_self_loops(), "row_norm").matrix
    y_masked = np.where(observed, y, 0.0)
    f = y_masked.copy()
    for _ in range(iters):
        f_new = alpha * (P @ f) + (1.0 - alpha) * y_masked
        f_new[observed] = y[observed]
        delta = float(np.abs(f_new - f).max())
        f = f_new
        if delta < 1e-9:
            break
    return f
