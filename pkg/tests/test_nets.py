import numpy as np
import pytest

from gnnreg import (
    FilterCoefficients,
    GcnParams,
    GnnParams,
    MlpParams,
    MultiscaleParams,
    build_graph,
    effective_sparsity,
    embed_polynomial_as_gcn,
    gcn_forward,
    gnn_predict,
    identity_operator,
    init_gnn_params,
    init_multiscale_params,
    load_params,
    mlp_forward,
    multiscale_forward,
    polynomial_propagate,
    project_params,
    propagation_operator,
    save_params,
)
from gnnreg.nets import mlp_forward_batch, softmax
from conftest import random_operator


def ring_op(n, kind="neigh_avg"):
    g = build_graph(n, [(i, (i + 1) % n) for i in range(n)],
                    add_self_loops=True)
    return propagation_operator(g, kind)


def simple_mlp(weights, biases, f_trunc=10.0):
    widths = [w.shape[0] for w in weights] + [1]
    return MlpParams(tuple(widths), weights, biases, f_trunc)


class TestGcnForward:
    def test_zero_gamma_gives_zero(self, rng):
        op = ring_op(6)
        p = GcnParams([rng.random((2, 2)) for _ in range(3)], np.zeros(3))
        assert np.all(gcn_forward(p, op, rng.random((6, 2))) == 0.0)

    def test_single_identity_layer_is_operator(self, rng):
        op = ring_op(6)
        X = rng.random((6, 2))
        p = GcnParams([np.eye(2)], np.array([1.0]))
        np.testing.assert_allclose(gcn_forward(p, op, X), op.matrix @ X)

    def test_two_layers_match_polynomial(self):
        op = ring_op(5)
        x = np.zeros((5, 1))
        x[0] = 1.0
        p = GcnParams([np.eye(1), np.eye(1)], np.array([0.5, 0.5]))
        expect = polynomial_propagate(
            op, FilterCoefficients(np.array([0.5, 0.5])), x)
        np.testing.assert_allclose(gcn_forward(p, op, x), expect, atol=1e-15)


class TestMlpForward:
    def test_zero_net(self):
        p = simple_mlp([np.zeros((3, 4)), np.zeros((4, 1))],
                       [np.zeros(4), np.zeros(1)])
        assert mlp_forward(p, np.ones(3)) == 0.0

    def test_affine_identity(self):
        p = simple_mlp([np.array([[1.0]])], [np.zeros(1)], f_trunc=1.0)
        assert mlp_forward(p, np.array([0.3])) == pytest.approx(0.3)

    def test_truncation_clamps(self):
        p = simple_mlp([np.array([[1.0]])], [np.array([4.0])], f_trunc=2.0)
        assert mlp_forward(p, np.array([1.0])) == 2.0
        assert mlp_forward(p, np.array([-10.0])) == -2.0

    def test_width_mismatch(self):
        p = simple_mlp([np.zeros((2, 1))], [np.zeros(1)])
        with pytest.raises(ValueError):
            mlp_forward(p, np.ones(3))

    def test_batch_matches_single(self, rng):
        p = init_gnn_params(3, 1, (5, 4), 2.0, seed=0).mlp
        Z = rng.normal(size=(10, 3))
        batch = mlp_forward_batch(p, Z)
        for i in range(10):
            assert batch[i] == pytest.approx(mlp_forward(p, Z[i]), abs=1e-14)


class TestGnnPredict:
    def test_zero_model(self, rng):
        op = ring_op(6)
        p = GnnParams(
            GcnParams([np.eye(1)], np.zeros(1)),
            simple_mlp([np.zeros((1, 3)), np.zeros((3, 1))],
                       [np.zeros(3), np.zeros(1)]))
        assert np.all(gnn_predict(p, op, rng.random((6, 1))) == 0.0)

    def test_shared_readout_on_identical_rows(self, rng):
        p = init_gnn_params(2, 1, (6,), 5.0, seed=3)
        op = identity_operator(5)
        X = np.tile(rng.random((1, 2)), (5, 1))
        pred = gnn_predict(p, op, X)
        assert np.ptp(pred) == 0.0

    def test_hand_built_chain(self):
        # path 0-1-2 with self-loops, row normalization
        g = build_graph(3, [(0, 1), (1, 2)], add_self_loops=True)
        op = propagation_operator(g, "row_norm")
        X = np.array([[1.0], [0.0], [0.0]])
        p = GnnParams(GcnParams([np.array([[2.0]])], np.array([1.0])),
                      simple_mlp([np.array([[3.0]])], [np.array([0.5])]))
        # propagated: (1/2, 1/3, 0) * 2 -> readout 3 z + 0.5
        expect = np.array([3 * 1.0 + 0.5, 3 * 2 / 3 + 0.5, 0.5])
        np.testing.assert_allclose(gnn_predict(p, op, X), expect, atol=1e-14)

    def test_truncation_bounds_predictions(self, rng):
        p = init_gnn_params(2, 2, (8,), 1.0, seed=7)
        for m in p.mlp.M:
            m *= 50.0
        op = ring_op(7)
        pred = gnn_predict(p, op, rng.random((7, 2)))
        assert np.abs(pred).max() <= 1.0

    def test_permutation_equivariance(self, rng):
        import scipy.sparse as sp

        from gnnreg.operators import PropagationOperator

        for _ in range(5):
            n = 9
            op = random_operator(rng, n)
            p = init_gnn_params(2, 2, (6,), 5.0, seed=11)
            X = rng.random((n, 2))
            perm = rng.permutation(n)
            P = sp.csr_matrix((np.ones(n), (np.arange(n), perm)), shape=(n, n))
            op_p = PropagationOperator((P @ op.matrix @ P.T).tocsr(), op.kind)
            pred = gnn_predict(p, op, X)
            pred_p = gnn_predict(p, op_p, P @ X)
            np.testing.assert_allclose(pred_p, P @ pred, atol=1e-12)

    def test_locality_within_receptive_field(self, rng):
        from gnnreg.theory import _reach_support

        for trial in range(4):
            n = int(rng.integers(6, 18))
            op = random_operator(rng, n)
            l1 = int(rng.integers(1, 3))
            p = init_gnn_params(2, l1, (5,), 10.0, seed=trial)
            X = rng.random((n, 2))
            base = gnn_predict(p, op, X)
            reach = _reach_support(op, l1).toarray().astype(bool)
            j = int(rng.integers(0, n))
            X2 = X.copy()
            X2[j] += 0.37
            moved = np.abs(gnn_predict(p, op, X2) - base) > 1e-12
            # nodes whose receptive field misses j must be unchanged
            assert not np.any(moved & ~reach[:, j])


class TestEmbedding:
    def test_first_order_embedding(self, rng):
        coeffs = FilterCoefficients(np.array([0.5]))
        p = embed_polynomial_as_gcn(coeffs, L1=1, d=2)
        np.testing.assert_array_equal(p.W[0], np.eye(2))
        assert p.gamma[0] == 0.5
        op = ring_op(6)
        X = rng.random((6, 2))
        np.testing.assert_allclose(gcn_forward(p, op, X),
                                   0.5 * (op.matrix @ X), atol=1e-15)

    def test_deep_embedding_zeroes_tail(self, rng):
        coeffs = FilterCoefficients(np.array([0.3, -0.7]))
        p = embed_polynomial_as_gcn(coeffs, L1=4, d=3)
        assert np.all(p.W[2] == 0.0) and np.all(p.W[3] == 0.0)
        assert np.all(p.gamma[2:] == 0.0)
        for _ in range(5):
            op = random_operator(rng, 12)
            X = rng.random((12, 3))
            a = gcn_forward(p, op, X)
            b = polynomial_propagate(op, coeffs, X)
            denom = max(1.0, np.abs(b).max())
            assert np.abs(a - b).max() / denom < 1e-12

    def test_zero_coefficient_embedding(self, rng):
        p = embed_polynomial_as_gcn(FilterCoefficients(np.array([0.0])), L1=2)
        op = ring_op(5)
        assert np.all(gcn_forward(p, op, rng.random((5, 1))) == 0.0)

    def test_depth_too_small(self):
        with pytest.raises(ValueError, match="depth"):
            embed_polynomial_as_gcn(
                FilterCoefficients(np.array([0.1, 0.2])), L1=1)

    def test_oversized_coefficients_direct_to_rescale(self):
        coeffs = FilterCoefficients(np.array([1.5]), beta=2.0)
        with pytest.raises(ValueError, match="rescale"):
            embed_polynomial_as_gcn(coeffs, L1=2)


class TestProjection:
    def test_clamps_and_preserves(self):
        p = GnnParams(
            GcnParams([np.array([[1.5, -0.2], [0.0, -3.0]])], np.array([2.0])),
            simple_mlp([np.full((2, 2), 0.7), np.full((2, 1), -1.2)],
                       [np.zeros(2), np.zeros(1)], f_trunc=3.0))
        q = project_params(p)
        np.testing.assert_array_equal(q.gcn.W[0],
                                      [[1.0, -0.2], [0.0, -1.0]])
        assert q.gcn.gamma[0] == 1.0
        assert np.all(q.mlp.M[1] == -1.0)
        assert q.mlp.f_trunc == 3.0

    def test_idempotent_and_nonincreasing(self, rng):
        p = init_gnn_params(3, 2, (4,), 2.0, seed=1)
        for w in p.gcn.W:
            w *= 5.0
        q = project_params(p)
        qq = project_params(q)
        for a, b in zip(q.gcn.W, qq.gcn.W):
            np.testing.assert_array_equal(a, b)
        for orig, proj in zip(p.mlp.M, q.mlp.M):
            assert np.all(np.abs(proj) <= np.abs(orig) + 1e-15)


class TestEffectiveSparsity:
    def test_zero_mlp(self):
        p = simple_mlp([np.zeros((2, 2)), np.zeros((2, 1))],
                       [np.zeros(2), np.zeros(1)])
        assert effective_sparsity(p, 1e-8) == 0

    def test_single_weight(self):
        p = simple_mlp([np.array([[0.5, 0.0]]), np.zeros((2, 1))],
                       [np.zeros(2), np.zeros(1)])
        assert effective_sparsity(p, 1e-8) == 1

    def test_threshold_is_strict(self):
        eps = 1e-3
        p = simple_mlp([np.array([[eps]])], [np.zeros(1)])
        assert effective_sparsity(p, eps) == 0


class TestMultiscale:
    def test_uniform_logits_give_uniform_weights(self):
        assert np.allclose(softmax(np.zeros(4)), 0.25)

    def test_single_hop_ignores_alpha(self, rng):
        op = ring_op(6, "sym_norm")
        X = rng.random((6, 2))
        head = init_gnn_params(2, 1, (5,), 5.0, seed=2).mlp
        a = MultiscaleParams(np.array([3.0]), np.eye(2), head)
        b = MultiscaleParams(np.array([-1.0]), np.eye(2), head)
        np.testing.assert_allclose(multiscale_forward(a, op, X),
                                   multiscale_forward(b, op, X))

    def test_hand_computed_two_hop(self):
        g = build_graph(3, [(0, 1), (1, 2)], add_self_loops=True)
        op = propagation_operator(g, "row_norm")
        X = np.array([[1.0], [0.0], [0.0]])
        head = simple_mlp([np.array([[1.0]])], [np.zeros(1)])
        p = MultiscaleParams(np.zeros(2), np.array([[1.0]]), head)
        dense = op.toarray()
        expect = 0.5 * (dense @ X + dense @ dense @ X).ravel()
        np.testing.assert_allclose(multiscale_forward(p, op, X), expect,
                                   atol=1e-14)


class TestCheckpoint:
    def test_gnn_round_trip(self, tmp_path, rng):
        p = init_gnn_params(3, 2, (6, 4), 7.0, seed=9)
        path = tmp_path / "model.npz"
        save_params(path, p)
        q = load_params(path)
        assert isinstance(q, GnnParams)
        np.testing.assert_array_equal(q.gcn.gamma, p.gcn.gamma)
        for a, b in zip(q.gcn.W, p.gcn.W):
            np.testing.assert_array_equal(a, b)
        for a, b in zip(q.mlp.M, p.mlp.M):
            np.testing.assert_array_equal(a, b)
        assert q.mlp.f_trunc == 7.0

    def test_multiscale_round_trip(self, tmp_path):
        p = init_multiscale_params(2, 3, (5,), 4.0, seed=4)
        path = tmp_path / "model.npz"
        save_params(path, p)
        q = load_params(path)
        assert isinstance(q, MultiscaleParams)
        np.testing.assert_array_equal(q.alpha, p.alpha)
        np.testing.assert_array_equal(q.W, p.W)
