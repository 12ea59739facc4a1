"""Masked least-squares training.

The objective is the squared error summed over observed nodes, divided by
the node count (``over_n``) or the observed count (``over_omega``); both
normalizations share every minimizer for a fixed mask.  Gradients are exact
reverse-mode derivatives under the subgradient conventions documented in
:mod:`gnnreg.nets`.  Training is full batch and, given a seed, fully
deterministic.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .errors import NumericError
from .nets import (
    GcnParams,
    GnnParams,
    MlpParams,
    MultiscaleParams,
    _gcn_layers,
    _mlp_layers,
    _multiscale_layers,
    gnn_predict,
    multiscale_forward,
    effective_sparsity,
)
from .operators import PropagationOperator

LOSS_NORMS = ("over_n", "over_omega")


@dataclass(frozen=True)
class MaskVector:
    """Bernoulli observation indicators plus the inclusion probability that
    generated them."""

    omega: np.ndarray
    pi: float

    def __post_init__(self):
        omega = np.ascontiguousarray(self.omega, dtype=bool)
        omega.flags.writeable = False
        object.__setattr__(self, "omega", omega)
        if not 0.0 < self.pi <= 1.0:
            raise ValueError(f"inclusion probability must be in (0, 1], got {self.pi}")

    @property
    def n(self) -> int:
        return self.omega.size

    @property
    def n_observed(self) -> int:
        return int(self.omega.sum())


@dataclass
class TrainConfig:
    """Full-batch first-order training settings."""

    epochs: int = 2000
    step_size: float = 1e-2
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    eps_adam: float = 1e-8
    project: bool = True
    seed: int = 0
    loss_norm: str = "over_n"

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.step_size <= 0:
            raise ValueError(f"step size must be positive, got {self.step_size}")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.loss_norm not in LOSS_NORMS:
            raise ValueError(f"unknown loss normalization {self.loss_norm!r}")


@dataclass
class FitResult:
    """Outcome of one training run."""

    params: object
    loss_trace: np.ndarray
    final_sparsity: int
    wall_time: float


def sample_mask(n: int, pi: float, seed: int) -> MaskVector:
    """Independent Bernoulli(pi) indicators from a seeded generator."""
    if not 0.0 < pi <= 1.0:
        raise ValueError(f"inclusion probability must be in (0, 1], got {pi}")
    rng = np.random.default_rng(seed)
    omega = rng.random(n) < pi
    return MaskVector(omega, pi)


def masked_mse(pred: np.ndarray, y: np.ndarray, mask: MaskVector,
               norm: str = "over_n") -> float:
    """Squared error over observed nodes under the chosen normalization."""
    pred = np.asarray(pred, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if pred.shape != y.shape or pred.shape != mask.omega.shape:
        raise ValueError(
            f"length mismatch: pred {pred.shape}, y {y.shape}, "
            f"mask {mask.omega.shape}")
    if norm not in LOSS_NORMS:
        raise ValueError(f"unknown loss normalization {norm!r}")
    n_obs = mask.n_observed
    if n_obs == 0:
        raise ValueError("mask observes no node")
    sq = (y - pred)[mask.omega]
    total = float(sq @ sq)
    return total / (mask.n if norm == "over_n" else n_obs)


# ---------------------------------------------------------------------------
# gradients


@dataclass
class GnnGrads:
    """Gradient container shaped like :class:`GnnParams`."""

    dW: list
    dgamma: np.ndarray
    dM: list
    db: list


@dataclass
class MultiscaleGrads:
    dalpha: np.ndarray
    dW: np.ndarray
    dM: list
    db: list


def _loss_scale(mask: MaskVector, norm: str) -> float:
    return 1.0 / (mask.n if norm == "over_n" else mask.n_observed)


def _mlp_backward(p: MlpParams, cache, g_out: np.ndarray):
    """Backpropagate through the readout; returns (dM, db, grad wrt input)."""
    U_list, V_list, raw = cache
    inside = np.abs(raw) < p.f_trunc
    G = (g_out * inside)[:, None]
    dM = [None] * len(p.M)
    db = [None] * len(p.b)
    for j in range(len(p.M) - 1, -1, -1):
        dM[j] = U_list[j].T @ G
        db[j] = G.sum(axis=0)
        G = G @ p.M[j].T
        if j > 0:
            G = G * (V_list[j - 1] > 0.0)
    return dM, db, G


def _gnn_forward_cache(p: GnnParams, op: PropagationOperator, X: np.ndarray):
    gcn_cache, Z = _gcn_layers(p.gcn, op, X)
    mlp_cache, pred = _mlp_layers(p.mlp, Z)
    return (gcn_cache, mlp_cache), pred


def _gnn_backward(p: GnnParams, op_T, cache, pred, y, mask: MaskVector,
                  norm: str) -> GnnGrads:
    (A_list, H_list), mlp_cache = cache
    scale = _loss_scale(mask, norm)
    g_pred = 2.0 * scale * mask.omega * (pred - y)
    dM, db, G_Z = _mlp_backward(p.mlp, mlp_cache, g_pred)
    L1 = p.gcn.depth
    dW = [None] * L1
    dgamma = np.zeros(L1)
    S = np.zeros_like(G_Z)
    for l in range(L1 - 1, -1, -1):
        dgamma[l] = float((G_Z * H_list[l]).sum())
        S = S + p.gcn.gamma[l] * G_Z
        dW[l] = A_list[l].T @ S
        if l > 0:
            S = op_T @ (S @ p.gcn.W[l].T)
    return GnnGrads(dW, dgamma, dM, db)


def gradients(p: GnnParams, op: PropagationOperator, X: np.ndarray,
              y: np.ndarray, mask: MaskVector,
              norm: str = "over_n") -> GnnGrads:
    """Exact reverse-mode gradient of the masked objective."""
    y = np.asarray(y, dtype=np.float64)
    if mask.n_observed == 0:
        raise ValueError("mask observes no node")
    cache, pred = _gnn_forward_cache(p, op, X)
    return _gnn_backward(p, op.transpose_csr(), cache, pred, y, mask, norm)


def _multiscale_forward_cache(p: MultiscaleParams, op, X):
    cache, pred = _multiscale_layers(p, op, X)
    return cache, pred


def _multiscale_backward(p: MultiscaleParams, cache, pred, y,
                         mask: MaskVector, norm: str) -> MultiscaleGrads:
    w, A_list, B, Z, mlp_cache = cache
    scale = _loss_scale(mask, norm)
    g_pred = 2.0 * scale * mask.omega * (pred - y)
    dM, db, G_Z = _mlp_backward(p.head, mlp_cache, g_pred)
    dW = B.T @ G_Z
    G_B = G_Z @ p.W.T
    dw = np.array([float((G_B * A).sum()) for A in A_list])
    dalpha = w * (dw - float(w @ dw))
    return MultiscaleGrads(dalpha, dW, dM, db)


def multiscale_gradients(p: MultiscaleParams, op: PropagationOperator,
                         X: np.ndarray, y: np.ndarray, mask: MaskVector,
                         norm: str = "over_n") -> MultiscaleGrads:
    """Reverse-mode gradient for the multi-hop fused model."""
    y = np.asarray(y, dtype=np.float64)
    if mask.n_observed == 0:
        raise ValueError("mask observes no node")
    cache, pred = _multiscale_forward_cache(p, op, X)
    return _multiscale_backward(p, cache, pred, y, mask, norm)


# ---------------------------------------------------------------------------
# optimizers


def _flatten(params) -> list:
    if isinstance(params, GnnParams):
        return [*params.gcn.W, params.gcn.gamma, *params.mlp.M, *params.mlp.b]
    if isinstance(params, MultiscaleParams):
        return [params.alpha, params.W, *params.head.M, *params.head.b]
    raise TypeError(type(params).__name__)


def _flatten_grads(grads) -> list:
    if isinstance(grads, GnnGrads):
        return [*grads.dW, grads.dgamma, *grads.dM, *grads.db]
    return [grads.dalpha, grads.dW, *grads.dM, *grads.db]


class _Adam:
    def __init__(self, shapes, cfg: TrainConfig):
        self.m = [np.zeros(s) for s in shapes]
        self.v = [np.zeros(s) for s in shapes]
        self.t = 0
        self.cfg = cfg

    def step(self, values, grads, frozen):
        cfg = self.cfg
        self.t += 1
        c1 = 1.0 - cfg.beta1**self.t
        c2 = 1.0 - cfg.beta2**self.t
        for i, (val, g) in enumerate(zip(values, grads)):
            if frozen[i]:
                continue
            self.m[i] = cfg.beta1 * self.m[i] + (1 - cfg.beta1) * g
            self.v[i] = cfg.beta2 * self.v[i] + (1 - cfg.beta2) * g * g
            m_hat = self.m[i] / c1
            v_hat = self.v[i] / c2
            val -= cfg.step_size * m_hat / (np.sqrt(v_hat) + cfg.eps_adam)


class _Sgd:
    def __init__(self, shapes, cfg: TrainConfig):
        self.cfg = cfg

    def step(self, values, grads, frozen):
        for i, (val, g) in enumerate(zip(values, grads)):
            if not frozen[i]:
                val -= self.cfg.step_size * g


def _frozen_flags(params, freeze) -> list:
    if isinstance(params, GnnParams):
        l1 = params.gcn.depth
        n_mlp = len(params.mlp.M) + len(params.mlp.b)
        return ([("gcn_weights" in freeze)] * l1
                + [("gcn_gamma" in freeze)]
                + [("mlp" in freeze)] * n_mlp)
    n_mlp = len(params.head.M) + len(params.head.b)
    return [("fusion" in freeze), ("shared_weight" in freeze)] + \
        [("mlp" in freeze)] * n_mlp


def _clone(params):
    if isinstance(params, GnnParams):
        return GnnParams(
            GcnParams([w.copy() for w in params.gcn.W], params.gcn.gamma.copy()),
            MlpParams(params.mlp.widths, [m.copy() for m in params.mlp.M],
                      [v.copy() for v in params.mlp.b], params.mlp.f_trunc))
    return MultiscaleParams(
        params.alpha.copy(), params.W.copy(),
        MlpParams(params.head.widths, [m.copy() for m in params.head.M],
                  [v.copy() for v in params.head.b], params.head.f_trunc))


def train_lse(init, data, cfg: TrainConfig, *, op: PropagationOperator = None,
              freeze=()) -> FitResult:
    """Full-batch first-order minimization of the masked objective.

    ``data`` provides ``op``, ``X``, ``y`` and ``mask`` attributes (a
    :class:`gnnreg.datagen.Dataset` or any compatible object); an explicit
    ``op`` overrides the dataset's operator.  ``freeze`` names parameter
    groups excluded from updates: ``gcn_weights``, ``gcn_gamma``, ``mlp``
    for the main model; ``fusion``, ``shared_weight``, ``mlp`` for the
    multi-hop model.
    """
    started = time.perf_counter()
    params = _clone(init)
    the_op = op if op is not None else data.op
    X = np.asarray(data.X, dtype=np.float64)
    y = np.asarray(data.y, dtype=np.float64)
    mask = data.mask
    if mask.n_observed == 0:
        raise ValueError("mask observes no node")
    is_gnn = isinstance(params, GnnParams)
    values = _flatten(params)
    frozen = _frozen_flags(params, freeze)
    opt_cls = _Adam if cfg.optimizer == "adam" else _Sgd
    optimizer = opt_cls([v.shape for v in values], cfg)
    op_T = the_op.transpose_csr() if is_gnn else None

    if is_gnn:
        cache, pred = _gnn_forward_cache(params, the_op, X)
    else:
        cache, pred = _multiscale_forward_cache(params, the_op, X)

    trace = np.empty(cfg.epochs)
    for epoch in range(cfg.epochs):
        if is_gnn:
            grads = _gnn_backward(params, op_T, cache, pred, y, mask,
                                  cfg.loss_norm)
        else:
            grads = _multiscale_backward(params, cache, pred, y, mask,
                                         cfg.loss_norm)
        optimizer.step(values, _flatten_grads(grads), frozen)
        if cfg.project and is_gnn:
            for v in values:
                np.clip(v, -1.0, 1.0, out=v)
        if is_gnn:
            cache, pred = _gnn_forward_cache(params, the_op, X)
        else:
            cache, pred = _multiscale_forward_cache(params, the_op, X)
        loss = masked_mse(pred, y, mask, cfg.loss_norm)
        if not np.isfinite(loss):
            raise NumericError(f"non-finite training loss at epoch {epoch}")
        trace[epoch] = loss

    mlp = params.mlp if is_gnn else params.head
    return FitResult(params=params, loss_trace=trace,
                     final_sparsity=effective_sparsity(mlp, 1e-8),
                     wall_time=time.perf_counter() - started)


def evaluate_risk(model, op: PropagationOperator, X_fresh: np.ndarray,
                  y_clean: np.ndarray) -> float:
    """Mean squared prediction error against clean targets over all nodes.

    ``model`` is a fitted parameter object, or a plain vector of node values
    for transductive baselines (in which case ``op`` and ``X_fresh`` only
    fix the expected length).
    """
    y_clean = np.asarray(y_clean, dtype=np.float64)
    if isinstance(model, GnnParams):
        pred = gnn_predict(model, op, X_fresh)
    elif isinstance(model, MultiscaleParams):
        pred = multiscale_forward(model, op, X_fresh)
    else:
        pred = np.asarray(model, dtype=np.float64)
    if pred.shape != y_clean.shape:
        raise ValueError(
            f"length mismatch: predictions {pred.shape}, targets {y_clean.shape}")
    diff = pred - y_clean
    return float(diff @ diff) / y_clean.size
