"""Computable counterparts of the analysis objects.

Everything here is deterministic and side-effect free: receptive-field
sizes from exact operator supports, a greedy coloring of the loss
dependency graph, entropy and complexity formulas, the operator-mismatch
bound with a direct numerical check, and the predicted convergence rate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .operators import (
    FilterCoefficients,
    PropagationOperator,
    apply_operator,
    frobenius_distance,
    row_sum_norm,
)


# ---------------------------------------------------------------------------
# receptive fields and dependency coloring


def _reach_support(op: PropagationOperator, L1: int) -> sp.csr_matrix:
    """Boolean support of |op| + |op|^2 + ... + |op|^L1."""
    if L1 < 1:
        raise ValueError(f"depth must be >= 1, got {L1}")
    B = (op.matrix != 0).astype(np.int8).tocsr()
    acc = B.copy()
    P = B
    for _ in range(1, L1):
        P = (P @ B != 0).astype(np.int8).tocsr()
        acc = ((acc + P) != 0).astype(np.int8).tocsr()
    acc.sort_indices()
    return acc


def receptive_field(op: PropagationOperator, L1: int) -> int:
    """Tightest locality parameter for this operator and depth: the larger
    of the maximal row and column support of the accumulated powers."""
    acc = _reach_support(op, L1)
    row_max = int(np.diff(acc.indptr).max()) if acc.nnz else 0
    col_max = int(np.diff(acc.tocsc().indptr).max()) if acc.nnz else 0
    return max(row_max, col_max, 1)


def receptive_field_bound(op: PropagationOperator, L1: int) -> int:
    """Conservative upper bound m_T^L1 from the operator's own row/column
    sparsity; reported alongside the exact value so the gap is visible."""
    if L1 < 1:
        raise ValueError(f"depth must be >= 1, got {L1}")
    B = (op.matrix != 0).astype(np.int8)
    row_max = int(np.diff(B.tocsr().indptr).max()) if B.nnz else 0
    col_max = int(np.diff(B.tocsc().indptr).max()) if B.nnz else 0
    return max(row_max, col_max, 1) ** L1


@dataclass(frozen=True)
class DependencyPartition:
    """Greedy coloring of nodal losses such that same-color losses read
    disjoint sets of feature rows."""

    colors: np.ndarray
    r: int
    m: int
    dep_degree_max: int

    def classes(self) -> list:
        return [np.flatnonzero(self.colors == c) for c in range(self.r)]


def dependency_partition(op: PropagationOperator, L1: int) -> DependencyPartition:
    """Color the loss dependency graph greedily in ascending node order.

    Two losses conflict when their depth-L1 receptive fields intersect.
    The greedy sweep guarantees r <= dep_degree_max + 1 <= m(m-1) + 1.
    """
    reach = _reach_support(op, L1)
    n = op.n
    dep = (reach @ reach.T != 0).astype(np.int8).tocsr()
    dep.sort_indices()
    colors = np.full(n, -1, dtype=np.int64)
    indptr, indices = dep.indptr, dep.indices
    dep_degree_max = 0
    r = 0
    for i in range(n):
        nbrs = indices[indptr[i]:indptr[i + 1]]
        nbrs = nbrs[nbrs != i]
        dep_degree_max = max(dep_degree_max, nbrs.size)
        used = colors[nbrs]
        used = used[used >= 0]
        if used.size == 0:
            colors[i] = 0
        else:
            taken = np.zeros(r + 1, dtype=bool)
            taken[used[used <= r]] = True
            colors[i] = int(np.flatnonzero(~taken)[0])
        r = max(r, colors[i] + 1)
    m = receptive_field(op, L1)
    if not (r <= dep_degree_max + 1 and dep_degree_max <= m * (m - 1)):
        raise AssertionError(
            f"coloring bound violated: r={r}, dep_degree_max={dep_degree_max}, "
            f"m={m}")
    return DependencyPartition(colors, int(r), int(m), int(dep_degree_max))


# ---------------------------------------------------------------------------
# entropy and complexity formulas


def entropy_bound(delta: float, d: int, L1: int, L2: int, widths, s: int,
                  t_rownorm: float) -> float:
    """Metric entropy bound of the model class at scale delta:
    (d^2 L1 + L1 + s + 1) * log(L(L1, L2) / delta * prod_k (p_k + 1)^2)
    with L(L1, L2) = 2 L1 (L1 + L2 + 2) (t v 1)^L1 d^L1."""
    if not 0.0 < delta <= 1.0:
        raise ValueError(f"scale must be in (0, 1], got {delta}")
    if L1 < 1:
        raise ValueError(f"convolution depth must be >= 1, got {L1}")
    widths = tuple(int(w) for w in widths)
    if len(widths) != L2 + 2:
        raise ValueError(
            f"width vector must have L2 + 2 = {L2 + 2} entries, got {len(widths)}")
    lead = 2.0 * L1 * (L1 + L2 + 2) * max(t_rownorm, 1.0) ** L1 * float(d) ** L1
    prod = 1.0
    for p in widths:
        prod *= float(p + 1) ** 2
    return (d * d * L1 + L1 + s + 1) * np.log(lead / delta * prod)


def kappa_n(n: int, d: int, L1: int, L2: int, s: int, t_rownorm: float) -> float:
    """Complexity factor (d^2 L1 + s) [log(n L1 (L1+L2))
    + (L1+1) log(t v d) + L2 log s]."""
    for name, val, low in (("n", n, 1), ("d", d, 1), ("L1", L1, 1),
                           ("L2", L2, 1), ("s", s, 2)):
        if val < low:
            raise ValueError(f"hypothesis violated: {name} must be >= {low}, "
                             f"got {val}")
    if not t_rownorm > 0:
        raise ValueError(f"hypothesis violated: t_rownorm must be > 0, "
                         f"got {t_rownorm}")
    return (d * d * L1 + s) * (
        np.log(float(n) * L1 * (L1 + L2))
        + (L1 + 1) * np.log(max(t_rownorm, float(d)))
        + L2 * np.log(float(s)))


# ---------------------------------------------------------------------------
# operator mismatch


def mismatch_bound(t_op: PropagationOperator, s_op: PropagationOperator,
                   coeffs: FilterCoefficients) -> float:
    """Worst-row bound tau sqrt(d_T + d_S) sum_i i |theta_i| A^(i-1) on the
    filter output difference, where tau is the Frobenius distance, d_* the
    row sparsities, and A the larger row-sum norm."""
    if t_op.n != s_op.n:
        raise ValueError(f"dimension mismatch: {t_op.n} vs {s_op.n}")
    tau = frobenius_distance(t_op, s_op)
    d_t = t_op.row_nnz_max()
    d_s = s_op.row_nnz_max()
    a = max(row_sum_norm(t_op), row_sum_norm(s_op))
    total = 0.0
    for i, theta_i in enumerate(coeffs.theta, start=1):
        total += i * abs(float(theta_i)) * a ** (i - 1)
    return tau * np.sqrt(d_t + d_s) * total


def verify_mismatch(t_op: PropagationOperator, s_op: PropagationOperator,
                    coeffs: FilterCoefficients, X: np.ndarray):
    """Numerically check the mismatch bound on a concrete input.

    Returns (lhs, rhs, holds) where lhs is the largest row sup-norm of the
    filter output difference, rhs the bound, and holds whether
    lhs <= rhs + 1e-9.  Inputs must lie in [0, 1] (the bound's domain).
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.min() < 0.0 or X.max() > 1.0:
        raise ValueError("input entries must lie in [0, 1]")
    if t_op.n != s_op.n:
        raise ValueError(f"dimension mismatch: {t_op.n} vs {s_op.n}")
    power_t, power_s = X, X
    diff = np.zeros_like(X)
    for theta_i in coeffs.theta:
        power_t = apply_operator(t_op, power_t)
        power_s = apply_operator(s_op, power_s)
        diff = diff + theta_i * (power_t - power_s)
    lhs = float(np.abs(diff).max()) if diff.size else 0.0
    rhs = mismatch_bound(t_op, s_op, coeffs)
    return lhs, rhs, bool(lhs <= rhs + 1e-9)


# ---------------------------------------------------------------------------
# smoothness and predicted rates


@dataclass(frozen=True)
class SmoothnessSpec:
    """Compositional smoothness description: q+1 stages with intrinsic
    dimensions t_vec and Hölder exponents alpha_vec; alpha_star holds the
    composition-adjusted exponents."""

    q: int
    d_vec: tuple
    t_vec: tuple
    alpha_vec: tuple
    alpha_star: tuple = ()

    def __post_init__(self):
        if self.q < 0:
            raise ValueError("composition depth must be >= 0")
        if len(self.t_vec) != self.q + 1 or len(self.alpha_vec) != self.q + 1:
            raise ValueError(
                f"need q + 1 = {self.q + 1} stage entries, got "
                f"t:{len(self.t_vec)} alpha:{len(self.alpha_vec)}")
        if len(self.d_vec) != self.q + 2:
            raise ValueError(f"d_vec needs q + 2 entries, got {len(self.d_vec)}")
        if any(a <= 0 for a in self.alpha_vec):
            raise ValueError("exponents must be positive")
        if any(t < 1 for t in self.t_vec):
            raise ValueError("intrinsic dimensions must be >= 1")


def effective_smoothness(spec: SmoothnessSpec) -> SmoothnessSpec:
    """Fill alpha_star: alpha_i * prod_{l > i} min(alpha_l, 1), with the
    last stage unchanged."""
    alpha = spec.alpha_vec
    q = spec.q
    star = []
    for i in range(q + 1):
        prod = 1.0
        for l in range(i + 1, q + 1):
            prod *= min(alpha[l], 1.0)
        star.append(alpha[i] * prod)
    return SmoothnessSpec(spec.q, tuple(spec.d_vec), tuple(spec.t_vec),
                          tuple(spec.alpha_vec), tuple(star))


def rate_exponent(spec: SmoothnessSpec) -> float:
    """Signed exponent of the bottleneck stage: max_i of
    -2 alpha_i^* / (2 alpha_i^* + t_i)."""
    filled = effective_smoothness(spec) if not spec.alpha_star else spec
    return max(-2.0 * a / (2.0 * a + t)
               for a, t in zip(filled.alpha_star, filled.t_vec))


def predicted_rate(spec: SmoothnessSpec, n: int, m: int, pi: float) -> float:
    """Reference value (m^2 log^3 n / pi) * n^(bottleneck exponent); the
    exponent alone is the quantity experiments can test."""
    if n < 2:
        raise ValueError(f"need n >= 2, got {n}")
    if not 0.0 < pi <= 1.0:
        raise ValueError(f"pi must be in (0, 1], got {pi}")
    return (m * m * np.log(n) ** 3 / pi) * float(n) ** rate_exponent(spec)


def stochastic_error_shapes(eps: float, n: int, pi: float, delta: float,
                            m: int, f_bound: float, log_n_delta: float) -> dict:
    """Structural forms of the two stochastic error terms with all universal
    constants set to 1; shape only, not calibrated magnitudes."""
    if not 0.0 < eps <= 1.0:
        raise ValueError(f"eps must be in (0, 1], got {eps}")
    e1 = m**2 * f_bound**2 * log_n_delta / (eps * n) + delta * f_bound
    e2 = ((1 + eps) * m**2 * f_bound**2 * log_n_delta / (eps * n * pi)
          + f_bound * delta / np.sqrt(pi)
          + f_bound**2 / np.exp(log_n_delta))
    return {"e1_shape": float(e1), "e2_shape": float(e2)}
