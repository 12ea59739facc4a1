"""Scikit-learn style estimators over a fixed graph.

All estimators take the graph (and training hyperparameters) in the
constructor and follow fit/predict with ``get_params``/``set_params`` from
``BaseEstimator``.  Unobserved responses are marked with NaN in ``y`` (an
explicit boolean mask can be passed to ``fit`` instead).

``GnnNodeRegressor``, ``MlpNodeRegressor``, and ``MultiscaleNodeRegressor``
are inductive: ``predict(X)`` accepts any feature matrix over the same
graph.  ``TikhonovRegressor`` and ``LabelPropagationRegressor`` are
transductive: they never look at features and ``predict`` returns the
fitted node values.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.exceptions import NotFittedError

from .baselines import label_propagation, tikhonov_fit
from .graph import SparseGraph
from .nets import (
    gnn_predict,
    init_gnn_params,
    init_multiscale_params,
    multiscale_forward,
)
from .operators import PropagationOperator, identity_operator, propagation_operator
from .training import MaskVector, TrainConfig, masked_mse, train_lse


def check_feature_matrix(X, n: int = None, d: int = None) -> np.ndarray:
    """Validate and convert a feature matrix to float64 (n, d)."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise ValueError(f"expected a 2-d feature matrix, got ndim={X.ndim}")
    if not np.isfinite(X).all():
        raise ValueError("features must be finite")
    if n is not None and X.shape[0] != n:
        raise ValueError(f"expected {n} rows, got {X.shape[0]}")
    if d is not None and X.shape[1] != d:
        raise ValueError(f"expected {d} columns, got {X.shape[1]}")
    return X


def resolve_mask(y, mask=None) -> tuple:
    """Split a response vector with NaN holes (or an explicit mask) into a
    filled response vector and a MaskVector."""
    y = np.asarray(y, dtype=np.float64).ravel()
    if mask is None:
        observed = np.isfinite(y)
    elif isinstance(mask, MaskVector):
        observed = mask.omega
    else:
        observed = np.asarray(mask, dtype=bool).ravel()
    if observed.shape != y.shape:
        raise ValueError(f"mask length {observed.shape} != y length {y.shape}")
    if not observed.any():
        raise ValueError("no observed responses")
    pi = mask.pi if isinstance(mask, MaskVector) else float(observed.mean())
    y_filled = np.where(observed, y, 0.0)
    if not np.isfinite(y_filled).all():
        raise ValueError("observed responses must be finite")
    return y_filled, MaskVector(observed, pi)


@dataclass
class _Problem:
    """Minimal train_lse input: operator plus training arrays."""

    op: PropagationOperator
    X: np.ndarray
    y: np.ndarray
    mask: MaskVector


class _FittedMixin:
    def _require_fitted(self):
        if getattr(self, "params_", None) is None and \
           getattr(self, "node_values_", None) is None:
            raise NotFittedError(f"{type(self).__name__} is not fitted")


class GnnNodeRegressor(BaseEstimator, RegressorMixin, _FittedMixin):
    """Linear graph convolutions with skip reweighting and a truncated ReLU
    readout, trained by masked least squares.

    ``skip=False`` pins the skip weights to the last layer, so only the
    deepest propagation feeds the readout.
    """

    def __init__(self, graph=None, operator_kind="sym_norm", conv_depth=2,
                 hidden=(32, 32), skip=True, f_trunc=10.0, epochs=2000,
                 step_size=1e-2, optimizer="adam", project=True,
                 loss_norm="over_n", seed=0, self_loops=True):
        self.graph = graph
        self.operator_kind = operator_kind
        self.conv_depth = conv_depth
        self.hidden = hidden
        self.skip = skip
        self.f_trunc = f_trunc
        self.epochs = epochs
        self.step_size = step_size
        self.optimizer = optimizer
        self.project = project
        self.loss_norm = loss_norm
        self.seed = seed
        self.self_loops = self_loops
        self.params_ = None

    def _operator(self) -> PropagationOperator:
        if not isinstance(self.graph, SparseGraph):
            raise ValueError("graph must be a SparseGraph")
        g = self.graph.with_self_loops() if self.self_loops else self.graph
        return propagation_operator(g, self.operator_kind)

    def _train_config(self) -> TrainConfig:
        return TrainConfig(epochs=self.epochs, step_size=self.step_size,
                           optimizer=self.optimizer, project=self.project,
                           seed=self.seed, loss_norm=self.loss_norm)

    def fit(self, X, y, mask=None):
        op = self._operator()
        X = check_feature_matrix(X, n=op.n)
        y_filled, mask_vec = resolve_mask(y, mask)
        init = init_gnn_params(X.shape[1], self.conv_depth, tuple(self.hidden),
                               self.f_trunc, self.seed, skip=self.skip)
        freeze = () if self.skip else ("gcn_gamma",)
        result = train_lse(init, _Problem(op, X, y_filled, mask_vec),
                           self._train_config(), freeze=freeze)
        self.params_ = result.params
        self.op_ = op
        self.loss_trace_ = result.loss_trace
        self.final_sparsity_ = result.final_sparsity
        self.train_mse_ = masked_mse(gnn_predict(result.params, op, X),
                                     y_filled, mask_vec, self.loss_norm)
        return self

    def predict(self, X) -> np.ndarray:
        self._require_fitted()
        X = check_feature_matrix(X, n=self.op_.n)
        return gnn_predict(self.params_, self.op_, X)


class MlpNodeRegressor(BaseEstimator, RegressorMixin, _FittedMixin):
    """Feature-only baseline: the shared readout applied to raw features
    (no propagation).  Implemented as the identity operator with a frozen
    single convolution layer, so training and prediction reuse the main
    code path."""

    def __init__(self, hidden=(32, 32), f_trunc=10.0, epochs=2000,
                 step_size=1e-2, optimizer="adam", project=True,
                 loss_norm="over_n", seed=0):
        self.hidden = hidden
        self.f_trunc = f_trunc
        self.epochs = epochs
        self.step_size = step_size
        self.optimizer = optimizer
        self.project = project
        self.loss_norm = loss_norm
        self.seed = seed
        self.params_ = None

    def fit(self, X, y, mask=None):
        X = check_feature_matrix(X)
        y_filled, mask_vec = resolve_mask(y, mask)
        d = X.shape[1]
        op = identity_operator(X.shape[0])
        init = init_gnn_params(d, 1, tuple(self.hidden), self.f_trunc, self.seed)
        init.gcn.W[0] = np.eye(d)
        init.gcn.gamma[:] = 1.0
        cfg = TrainConfig(epochs=self.epochs, step_size=self.step_size,
                          optimizer=self.optimizer, project=self.project,
                          seed=self.seed, loss_norm=self.loss_norm)
        result = train_lse(init, _Problem(op, X, y_filled, mask_vec), cfg,
                           freeze=("gcn_weights", "gcn_gamma"))
        self.params_ = result.params
        self.loss_trace_ = result.loss_trace
        self.final_sparsity_ = result.final_sparsity
        self.train_mse_ = masked_mse(
            gnn_predict(result.params, op, X), y_filled, mask_vec,
            self.loss_norm)
        return self

    def predict(self, X) -> np.ndarray:
        self._require_fitted()
        X = check_feature_matrix(X, d=self.params_.gcn.d)
        return gnn_predict(self.params_, identity_operator(X.shape[0]), X)


class MultiscaleNodeRegressor(BaseEstimator, RegressorMixin, _FittedMixin):
    """Multi-hop model fusing symmetric-normalized propagation depths by a
    learned softmax, with a shared feature weight and an MLP head.

    The operator is built without self-loops; isolated nodes receive
    all-zero propagation rows.
    """

    def __init__(self, graph=None, hops=2, hidden=(32, 32), f_trunc=10.0,
                 epochs=2000, step_size=1e-2, optimizer="adam",
                 loss_norm="over_n", seed=0):
        self.graph = graph
        self.hops = hops
        self.hidden = hidden
        self.f_trunc = f_trunc
        self.epochs = epochs
        self.step_size = step_size
        self.optimizer = optimizer
        self.loss_norm = loss_norm
        self.seed = seed
        self.params_ = None

    def _operator(self) -> PropagationOperator:
        if not isinstance(self.graph, SparseGraph):
            raise ValueError("graph must be a SparseGraph")
        return propagation_operator(self.graph.without_self_loops(),
                                    "sym_norm", allow_isolated=True)

    def fit(self, X, y, mask=None):
        op = self._operator()
        X = check_feature_matrix(X, n=op.n)
        y_filled, mask_vec = resolve_mask(y, mask)
        init = init_multiscale_params(X.shape[1], self.hops, tuple(self.hidden),
                                      self.f_trunc, self.seed)
        cfg = TrainConfig(epochs=self.epochs, step_size=self.step_size,
                          optimizer=self.optimizer, project=False,
                          seed=self.seed, loss_norm=self.loss_norm)
        result = train_lse(init, _Problem(op, X, y_filled, mask_vec), cfg)
        self.params_ = result.params
        self.op_ = op
        self.loss_trace_ = result.loss_trace
        self.final_sparsity_ = result.final_sparsity
        self.train_mse_ = masked_mse(
            multiscale_forward(result.params, op, X), y_filled, mask_vec,
            self.loss_norm)
        return self

    def predict(self, X) -> np.ndarray:
        self._require_fitted()
        X = check_feature_matrix(X, n=self.op_.n)
        return multiscale_forward(self.params_, self.op_, X)


class TikhonovRegressor(BaseEstimator, RegressorMixin, _FittedMixin):
    """Laplacian-penalized least squares over observed nodes (transductive;
    features are ignored)."""

    def __init__(self, graph=None, lam=1.0):
        self.graph = graph
        self.lam = lam
        self.node_values_ = None

    def fit(self, X, y, mask=None):
        if not isinstance(self.graph, SparseGraph):
            raise ValueError("graph must be a SparseGraph")
        y_filled, mask_vec = resolve_mask(y, mask)
        self.node_values_ = tikhonov_fit(self.graph, y_filled, mask_vec,
                                         self.lam)
        self.train_mse_ = masked_mse(self.node_values_, y_filled, mask_vec)
        return self

    def predict(self, X=None) -> np.ndarray:
        self._require_fitted()
        return self.node_values_.copy()


class LabelPropagationRegressor(BaseEstimator, RegressorMixin, _FittedMixin):
    """Iterative harmonic label spreading with observed nodes clamped
    (transductive; features are ignored)."""

    def __init__(self, graph=None, alpha=0.9, iters=1000):
        self.graph = graph
        self.alpha = alpha
        self.iters = iters
        self.node_values_ = None

    def fit(self, X, y, mask=None):
        if not isinstance(self.graph, SparseGraph):
            raise ValueError("graph must be a SparseGraph")
        y_filled, mask_vec = resolve_mask(y, mask)
        self.node_values_ = label_propagation(self.graph, y_filled, mask_vec,
                                              self.alpha, self.iters)
        self.train_mse_ = masked_mse(self.node_values_, y_filled, mask_vec)
        return self

    def predict(self, X=None) -> np.ndarray:
        self._require_fitted()
        return self.node_values_.copy()
