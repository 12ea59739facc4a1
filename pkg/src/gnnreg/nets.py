"""Network parameter containers and forward passes.

The prediction model composes two blocks: a linear graph-convolution stack
whose per-layer outputs are recombined through scalar skip weights, and a
truncated ReLU multilayer perceptron applied row-wise as a shared readout.

Subgradient conventions used throughout (and by the training module):
ReLU' is 0 at the origin; the output clamp has derivative 1 strictly inside
(-F, F) and 0 at or beyond the clamp.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .operators import FilterCoefficients, PropagationOperator, apply_operator


# ---------------------------------------------------------------------------
# parameter containers


@dataclass
class GcnParams:
    """Weights of the graph-convolution stack.

    ``W[l]`` is the d-by-d weight of layer l+1 and ``gamma[l]`` its skip
    weight; layer outputs follow H_l = op @ H_{l-1} @ W_l with H_0 = X and
    the block output is sum_l gamma_l H_l (identity activation).
    """

    W: list
    gamma: np.ndarray

    def __post_init__(self):
        self.W = [np.array(w, dtype=np.float64) for w in self.W]
        self.gamma = np.array(self.gamma, dtype=np.float64)
        if len(self.W) != self.gamma.size or not self.W:
            raise ValueError("need one gamma per W matrix, at least one layer")
        d = self.W[0].shape[0]
        for w in self.W:
            if w.shape != (d, d):
                raise ValueError(f"all W must be {d}x{d}, got {w.shape}")

    @property
    def depth(self) -> int:
        return len(self.W)

    @property
    def d(self) -> int:
        return self.W[0].shape[0]


@dataclass
class MlpParams:
    """ReLU readout with widths (p_0, ..., p_{L+1}); output clamped to
    [-f_trunc, f_trunc].  Depth L counts ReLU layers; L = 0 is affine."""

    widths: tuple
    M: list
    b: list
    f_trunc: float = 1.0

    def __post_init__(self):
        self.widths = tuple(int(w) for w in self.widths)
        self.M = [np.array(m, dtype=np.float64) for m in self.M]
        self.b = [np.array(v, dtype=np.float64) for v in self.b]
        if len(self.widths) < 2:
            raise ValueError("widths must have at least (input, output)")
        if self.widths[-1] != 1:
            raise ValueError("output width must be 1")
        if len(self.M) != len(self.widths) - 1 or len(self.b) != len(self.M):
            raise ValueError("need one (M, b) pair per affine layer")
        for l, (m, v) in enumerate(zip(self.M, self.b)):
            want = (self.widths[l], self.widths[l + 1])
            if m.shape != want:
                raise ValueError(f"layer {l}: M shape {m.shape}, want {want}")
            if v.shape != (self.widths[l + 1],):
                raise ValueError(f"layer {l}: b shape {v.shape}")
        if not self.f_trunc >= 1.0:
            raise ValueError(f"truncation level must be >= 1, got {self.f_trunc}")

    @property
    def depth(self) -> int:
        return len(self.widths) - 2

    @property
    def in_width(self) -> int:
        return self.widths[0]


@dataclass
class GnnParams:
    """Full model: graph-convolution block plus shared MLP readout."""

    gcn: GcnParams
    mlp: MlpParams

    def __post_init__(self):
        if self.mlp.in_width != self.gcn.d:
            raise ValueError(
                f"readout input width {self.mlp.in_width} != feature dim "
                f"{self.gcn.d}")


@dataclass
class MultiscaleParams:
    """Multi-hop model with a single shared feature weight: hop outputs
    op^l X W are fused by softmax(alpha) and fed to an MLP head."""

    alpha: np.ndarray
    W: np.ndarray
    head: MlpParams

    def __post_init__(self):
        self.alpha = np.array(self.alpha, dtype=np.float64)
        self.W = np.array(self.W, dtype=np.float64)
        if self.alpha.ndim != 1 or self.alpha.size < 1:
            raise ValueError("alpha must be a nonempty vector")
        if self.W.ndim != 2 or self.W.shape[0] != self.W.shape[1]:
            raise ValueError("W must be square")
        if self.head.in_width != self.W.shape[1]:
            raise ValueError("head input width must match W")

    @property
    def hops(self) -> int:
        return self.alpha.size


# ---------------------------------------------------------------------------
# forward passes


def gcn_forward(p: GcnParams, op: PropagationOperator, X: np.ndarray) -> np.ndarray:
    """Aggregated convolution output sum_l gamma_l op^l X W_1..W_l."""
    return _gcn_layers(p, op, X)[1]


def _gcn_layers(p: GcnParams, op: PropagationOperator, X: np.ndarray):
    """Return (per-layer caches, aggregated output).

    The cache holds, per layer, the pre-weight product A_l = op @ H_{l-1}
    and the layer output H_l = A_l @ W_l; the training module reuses both.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[1] != p.d:
        raise ValueError(f"feature dim {X.shape[1]} != weight dim {p.d}")
    H = X
    A_list, H_list = [], []
    Z = np.zeros_like(X)
    for w, g in zip(p.W, p.gamma):
        A = apply_operator(op, H)
        H = A @ w
        A_list.append(A)
        H_list.append(H)
        if g != 0.0:
            Z = Z + g * H
    return (A_list, H_list), Z


def mlp_forward(p: MlpParams, z: np.ndarray) -> float:
    """Readout of a single propagated feature row."""
    z = np.asarray(z, dtype=np.float64)
    if z.shape != (p.in_width,):
        raise ValueError(f"input width {z.shape} != {(p.in_width,)}")
    return float(mlp_forward_batch(p, z[None, :])[0])


def mlp_forward_batch(p: MlpParams, Z: np.ndarray) -> np.ndarray:
    """Readout applied to every row of Z; returns a length-n vector."""
    return _mlp_layers(p, Z)[1]


def _mlp_layers(p: MlpParams, Z: np.ndarray):
    """Return (cache, clamped outputs).  Cache holds layer inputs U_j and
    pre-activations V_j needed for backpropagation."""
    Z = np.asarray(Z, dtype=np.float64)
    if Z.ndim != 2 or Z.shape[1] != p.in_width:
        raise ValueError(f"expected (n, {p.in_width}) input, got {Z.shape}")
    U = Z
    U_list, V_list = [], []
    last = len(p.M) - 1
    for j, (m, v) in enumerate(zip(p.M, p.b)):
        U_list.append(U)
        V = U @ m + v
        V_list.append(V)
        U = np.maximum(V, 0.0) if j < last else V
    raw = V_list[-1][:, 0]
    out = np.clip(raw, -p.f_trunc, p.f_trunc)
    return (U_list, V_list, raw), out


def gnn_predict(p: GnnParams, op: PropagationOperator, X: np.ndarray) -> np.ndarray:
    """Node-level predictions: shared readout applied to each propagated row."""
    _, Z = _gcn_layers(p.gcn, op, X)
    return mlp_forward_batch(p.mlp, Z)


def multiscale_forward(p: MultiscaleParams, op: PropagationOperator,
                       X: np.ndarray) -> np.ndarray:
    """Softmax-fused multi-hop representation through the head MLP."""
    _, out = _multiscale_layers(p, op, X)
    return out


def _multiscale_layers(p: MultiscaleParams, op: PropagationOperator,
                       X: np.ndarray):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    w = softmax(p.alpha)
    A_list = []
    power = X
    B = np.zeros_like(X)
    for wl in w:
        power = apply_operator(op, power)
        A_list.append(power)
        B = B + wl * power
    Z = B @ p.W
    mlp_cache, out = _mlp_layers(p.head, Z)
    return (w, A_list, B, Z, mlp_cache), out


def softmax(a: np.ndarray) -> np.ndarray:
    e = np.exp(a - a.max())
    return e / e.sum()


# ---------------------------------------------------------------------------
# constructions and transforms


def embed_polynomial_as_gcn(coeffs: FilterCoefficients, L1: int,
                            d: int = 1) -> GcnParams:
    """Represent a degree-k polynomial filter exactly inside the
    convolution class of depth L1 >= k, for feature dimension d.

    Layers up to the filter order carry identity weights and the filter
    coefficients as skip weights; deeper layers are zeroed.  The block
    output then coincides with the polynomial filter for every operator
    and input.
    """
    k = coeffs.k
    if L1 < k:
        raise ValueError(f"depth {L1} cannot hold a degree-{k} filter")
    if np.abs(coeffs.theta).max() > 1.0 + 1e-15:
        raise ValueError(
            "coefficients must lie in [-1, 1]; rescale the filter and fold "
            "the scale into the readout instead")
    W = [np.eye(d) if l < k else np.zeros((d, d)) for l in range(L1)]
    gamma = np.zeros(L1)
    gamma[:k] = coeffs.theta
    return GcnParams(W, gamma)


def project_params(p: GnnParams) -> GnnParams:
    """Clamp every scalar parameter to [-1, 1]; idempotent.

    The truncation level is an architecture constant, not a trainable
    parameter, and passes through unchanged.
    """
    gcn = GcnParams([np.clip(w, -1.0, 1.0) for w in p.gcn.W],
                    np.clip(p.gcn.gamma, -1.0, 1.0))
    mlp = MlpParams(p.mlp.widths,
                    [np.clip(m, -1.0, 1.0) for m in p.mlp.M],
                    [np.clip(v, -1.0, 1.0) for v in p.mlp.b],
                    p.mlp.f_trunc)
    return GnnParams(gcn, mlp)


def effective_sparsity(p: MlpParams, eps: float = 1e-8) -> int:
    """Number of readout weights and biases strictly larger than eps in
    magnitude."""
    if eps < 0:
        raise ValueError(f"threshold must be >= 0, got {eps}")
    count = 0
    for m, v in zip(p.M, p.b):
        count += int((np.abs(m) > eps).sum() + (np.abs(v) > eps).sum())
    return count


def init_mlp_params(widths, f_trunc: float, rng: np.random.Generator) -> MlpParams:
    """Uniform [-1/sqrt(fan_in), 1/sqrt(fan_in)] weights and biases.

    Biases share the weight distribution so that ReLU kinks start scattered
    across the input range; zero biases put every kink at the origin, which
    lies outside the data range for nonnegative features and can leave the
    first layer effectively linear for the whole run.
    """
    M, b = [], []
    for w_in, w_out in zip(widths[:-1], widths[1:]):
        bound = 1.0 / np.sqrt(w_in)
        M.append(rng.uniform(-bound, bound, size=(w_in, w_out)))
        b.append(rng.uniform(-bound, bound, size=w_out))
    return MlpParams(tuple(widths), M, b, f_trunc)


def init_gnn_params(d: int, l1: int, hidden, f_trunc: float, seed: int,
                    skip: bool = True) -> GnnParams:
    """Fresh trainable model.

    Convolution weights are fan-in-scaled uniform and skip weights start at
    1/L1 each; with ``skip=False`` only the last layer feeds the readout
    (skip weights pinned to the last unit vector).
    """
    rng = np.random.default_rng(seed)
    bound = 1.0 / np.sqrt(d)
    W = [rng.uniform(-bound, bound, size=(d, d)) for _ in range(l1)]
    if skip:
        gamma = np.full(l1, 1.0 / l1)
    else:
        gamma = np.zeros(l1)
        gamma[-1] = 1.0
    mlp = init_mlp_params((d, *hidden, 1), f_trunc, rng)
    return GnnParams(GcnParams(W, gamma), mlp)


def init_multiscale_params(d: int, hops: int, hidden, f_trunc: float,
                           seed: int) -> MultiscaleParams:
    """Fresh multi-hop model: uniform fusion logits, fan-in-scaled shared
    weight, standard head initialization."""
    rng = np.random.default_rng(seed)
    alpha = np.zeros(hops)
    bound = 1.0 / np.sqrt(d)
    W = rng.uniform(-bound, bound, size=(d, d))
    head = init_mlp_params((d, *hidden, 1), f_trunc, rng)
    return MultiscaleParams(alpha, W, head)


def save_params(path, params) -> None:
    """Write parameters as a flat key/value .npz archive (version field
    included); shared by the CLI and the experiment runner."""
    arrays = {"format_version": np.array(1, dtype=np.int64)}
    if isinstance(params, GnnParams):
        arrays["model_kind"] = np.array("gnn")
        arrays["gcn_gamma"] = params.gcn.gamma
        for i, w in enumerate(params.gcn.W):
            arrays[f"gcn_w_{i}"] = w
        arrays["mlp_widths"] = np.array(params.mlp.widths, dtype=np.int64)
        arrays["mlp_f_trunc"] = np.array(params.mlp.f_trunc)
        for i, (m, v) in enumerate(zip(params.mlp.M, params.mlp.b)):
            arrays[f"mlp_m_{i}"] = m
            arrays[f"mlp_b_{i}"] = v
    elif isinstance(params, MultiscaleParams):
        arrays["model_kind"] = np.array("multiscale")
        arrays["ms_alpha"] = params.alpha
        arrays["ms_w"] = params.W
        arrays["mlp_widths"] = np.array(params.head.widths, dtype=np.int64)
        arrays["mlp_f_trunc"] = np.array(params.head.f_trunc)
        for i, (m, v) in enumerate(zip(params.head.M, params.head.b)):
            arrays[f"mlp_m_{i}"] = m
            arrays[f"mlp_b_{i}"] = v
    else:
        raise TypeError(f"cannot checkpoint {type(params).__name__}")
    np.savez(path, **arrays)


def load_params(path):
    """Inverse of :func:`save_params`."""
    with np.load(path, allow_pickle=False) as archive:
        version = int(archive["format_version"])
        if version != 1:
            raise ValueError(f"unsupported checkpoint version {version}")
        kind = str(archive["model_kind"])
        widths = tuple(int(w) for w in archive["mlp_widths"])
        n_aff = len(widths) - 1
        M = [archive[f"mlp_m_{i}"] for i in range(n_aff)]
        b = [archive[f"mlp_b_{i}"] for i in range(n_aff)]
        mlp = MlpParams(widths, M, b, float(archive["mlp_f_trunc"]))
        if kind == "gnn":
            gamma = archive["gcn_gamma"]
            W = [archive[f"gcn_w_{i}"] for i in range(gamma.size)]
            return GnnParams(GcnParams(W, gamma), mlp)
        if kind == "multiscale":
            return MultiscaleParams(archive["ms_alpha"], archive["ms_w"], mlp)
    raise ValueError(f"unknown model kind {kind!r}")
