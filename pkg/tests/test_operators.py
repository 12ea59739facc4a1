import numpy as np
import pytest

from gnnreg import (
    FilterCoefficients,
    apply_operator,
    build_graph,
    frobenius_distance,
    identity_operator,
    polynomial_propagate,
    propagation_operator,
    row_sum_norm,
)
from gnnreg.errors import DegeneracyError
from gnnreg.operators import OPERATOR_KINDS
from conftest import random_connected_graph, random_operator


def ring(n, loops=True):
    return build_graph(n, [(i, (i + 1) % n) for i in range(n)],
                       add_self_loops=loops)


class TestPropagationOperator:
    def test_ring5_sym_norm_values(self):
        op = propagation_operator(ring(5), "sym_norm")
        np.testing.assert_allclose(op.matrix.data, 1.0 / 3.0)
        np.testing.assert_allclose(op.toarray().sum(axis=1), 1.0, atol=1e-12)

    def test_raw_adj_values_are_one(self, rng):
        g = random_connected_graph(rng, 12, self_loops=False)
        op = propagation_operator(g, "raw_adj")
        assert np.all(op.matrix.data == 1.0)

    def test_two_node_row_norm(self):
        op = propagation_operator(build_graph(2, [(0, 1)]), "row_norm")
        np.testing.assert_array_equal(op.toarray(), [[0.0, 1.0], [1.0, 0.0]])

    def test_zero_degree_rejected_for_normalized(self):
        g = build_graph(3, [(0, 1)])  # node 2 isolated
        with pytest.raises(DegeneracyError, match="node 2"):
            propagation_operator(g, "row_norm")
        op = propagation_operator(g, "sym_norm", allow_isolated=True)
        assert np.all(op.toarray()[2] == 0.0)

    def test_pattern_matches_adjacency_for_all_kinds(self, rng):
        for _ in range(8):
            g = random_connected_graph(rng, int(rng.integers(3, 25)),
                                       self_loops=True)
            for kind in OPERATOR_KINDS:
                op = propagation_operator(g, kind)
                dense = op.toarray()
                for i in range(g.n):
                    assert set(np.flatnonzero(dense[i])) == \
                        set(int(j) for j in g.adjacency[i])

    def test_sym_norm_symmetric(self, rng):
        for _ in range(10):
            g = random_connected_graph(rng, int(rng.integers(3, 40)),
                                       self_loops=True)
            dense = propagation_operator(g, "sym_norm").toarray()
            assert np.abs(dense - dense.T).max() < 1e-12

    def test_row_norm_rows_sum_to_one(self, rng):
        for kind in ("row_norm", "neigh_avg"):
            g = random_connected_graph(rng, 20, self_loops=True)
            sums = propagation_operator(g, kind).toarray().sum(axis=1)
            np.testing.assert_allclose(sums, 1.0, atol=1e-12)


class TestApplyOperator:
    def test_identity(self, rng):
        X = rng.random((7, 3))
        np.testing.assert_array_equal(apply_operator(identity_operator(7), X), X)

    def test_zero_row_gives_zero_output(self):
        g = build_graph(3, [(0, 1)])
        op = propagation_operator(g, "raw_adj")
        out = apply_operator(op, np.ones((3, 2)))
        assert np.all(out[2] == 0.0)

    def test_ring5_indicator(self):
        op = propagation_operator(ring(5), "neigh_avg")
        x = np.zeros(5)
        x[0] = 1.0
        out = apply_operator(op, x).ravel()
        np.testing.assert_allclose(out, [1 / 3, 1 / 3, 0, 0, 1 / 3], atol=1e-15)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="mismatch"):
            apply_operator(identity_operator(3), np.ones((4, 2)))


class TestPolynomialPropagate:
    def test_identity_op_first_order(self, rng):
        X = rng.random((6, 2))
        out = polynomial_propagate(identity_operator(6),
                                   FilterCoefficients(np.array([1.0])), X)
        np.testing.assert_array_equal(out, X)

    def test_zero_coefficients(self, rng):
        op = random_operator(rng, 10)
        X = rng.random((10, 2))
        out = polynomial_propagate(
            op, FilterCoefficients(np.zeros(3), beta=1.0), X)
        assert np.all(out == 0.0)

    def test_ring5_two_hop_value(self):
        op = propagation_operator(ring(5), "neigh_avg")
        x = np.zeros(5)
        x[0] = 1.0
        out = polynomial_propagate(
            op, FilterCoefficients(np.array([0.5, 0.5])), x).ravel()
        # one hop puts 1/3 at node 0; two hops put 3/9 there
        np.testing.assert_allclose(out[0], 0.5 / 3 + 0.5 / 3, atol=1e-15)

    def test_unit_vector_matches_repeated_apply(self, rng):
        for _ in range(12):
            n = int(rng.integers(3, 30))
            op = random_operator(rng, n)
            d = int(rng.integers(1, 5))
            X = rng.random((n, d))
            j = int(rng.integers(1, 5))
            theta = np.zeros(j)
            theta[-1] = 1.0
            out = polynomial_propagate(op, FilterCoefficients(theta), X)
            expect = X
            for _ in range(j):
                expect = apply_operator(op, expect)
            assert np.abs(out - expect).max() <= 1e-12 * max(
                1.0, np.abs(expect).max())

    def test_matches_dense_power_oracle(self, rng):
        for _ in range(8):
            n = int(rng.integers(3, 12))
            op = random_operator(rng, n)
            dense = op.toarray()
            k = int(rng.integers(1, 4))
            theta = rng.uniform(-1, 1, k)
            X = rng.random((n, 2))
            expect = np.zeros_like(X)
            power = np.eye(n)
            for t in theta:
                power = power @ dense
                expect += t * (power @ X)
            out = polynomial_propagate(op, FilterCoefficients(theta), X)
            np.testing.assert_allclose(out, expect, atol=1e-12)

    def test_coefficient_validation(self):
        with pytest.raises(ValueError, match="beta"):
            FilterCoefficients(np.array([0.5]), beta=0.0)
        with pytest.raises(ValueError, match="exceeds"):
            FilterCoefficients(np.array([2.0]), beta=1.0)
        with pytest.raises(ValueError, match="nonempty"):
            FilterCoefficients(np.array([]))


class TestNorms:
    def test_row_norm_operator_norm_is_one(self, rng):
        g = random_connected_graph(rng, 15, self_loops=True)
        assert row_sum_norm(propagation_operator(g, "row_norm")) == \
            pytest.approx(1.0, abs=1e-12)

    def test_raw_adj_ring_norm_three(self):
        assert row_sum_norm(propagation_operator(ring(5), "raw_adj")) == 3.0

    def test_zero_matrix_norm(self):
        op = propagation_operator(build_graph(3, []), "raw_adj")
        assert row_sum_norm(op) == 0.0

    def test_power_norm_submultiplicative(self, rng):
        for _ in range(10):
            n = int(rng.integers(3, 12))
            op = random_operator(rng, n)
            base = row_sum_norm(op)
            dense = op.toarray()
            power = np.eye(n)
            for j in range(1, 5):
                power = power @ dense
                norm_j = np.abs(power).sum(axis=1).max()
                assert norm_j <= base**j + 1e-9

    def test_frobenius_cases(self):
        op = propagation_operator(ring(5), "sym_norm")
        assert frobenius_distance(op, op) == 0.0
        eye2 = identity_operator(2)
        zero2 = propagation_operator(build_graph(2, []), "raw_adj")
        assert frobenius_distance(eye2, zero2) == pytest.approx(np.sqrt(2))
        # a regular graph makes the two normalizations coincide
        sym = propagation_operator(ring(5), "sym_norm")
        row = propagation_operator(ring(5), "row_norm")
        assert frobenius_distance(sym, row) == pytest.approx(0.0, abs=1e-12)

    def test_frobenius_dimension_mismatch(self):
        with pytest.raises(ValueError, match="mismatch"):
            frobenius_distance(identity_operator(2), identity_operator(3))
