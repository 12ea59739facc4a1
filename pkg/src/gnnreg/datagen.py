"""Synthetic graphs, feature samplers, target functions, and full datasets.

Every generator is a pure function of its seed; child seeds for the graph,
filter coefficients, feature copies, target, noise, and mask are derived
from the dataset seed so that identical parameter tuples produce bitwise
identical datasets.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import expit

from .baselines import laplacian_energy
from .errors import FormatError
from .graph import SparseGraph, build_graph, read_edge_list, write_edge_list
from .operators import (
    FilterCoefficients,
    PropagationOperator,
    polynomial_propagate,
    propagation_operator,
)
from .seeding import derive_seed
from .training import MaskVector, sample_mask

TOPOLOGY_KINDS = ("ring", "erdos_renyi", "sbm2", "rgg", "barabasi_albert")
BROWNIAN_GRID = 2**12  # number of increments of the reference path


@dataclass(frozen=True)
class TopologySpec:
    """Which random-graph family to draw and at what size/density."""

    kind: str
    n: int
    avg_degree: float = 2.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in TOPOLOGY_KINDS:
            raise ValueError(f"unknown topology kind {self.kind!r}")
        if self.n < 1:
            raise ValueError(f"node count must be positive, got {self.n}")


# ---------------------------------------------------------------------------
# random graph families


def _pair_indices_bernoulli(m_pairs: int, p: float, rng) -> list:
    """Indices of an implicit pair list kept independently with prob p,
    via geometric skipping (cost proportional to the output)."""
    if m_pairs <= 0 or p <= 0.0:
        return []
    if p >= 1.0:
        return list(range(m_pairs))
    out = []
    log_q = math.log1p(-p)
    i = -1
    while True:
        r = rng.random()
        i += 1 + int(math.log(1.0 - r) / log_q)
        if i >= m_pairs:
            return out
        out.append(i)


def _unrank_within(indices, size: int) -> np.ndarray:
    """Map lexicographic ranks to pairs (u, v), u < v, within one block."""
    if not len(indices):
        return np.empty((0, 2), dtype=np.int64)
    idx = np.asarray(indices, dtype=np.int64)
    rows = np.arange(size, dtype=np.int64)
    starts = rows * size - rows * (rows + 1) // 2  # rank of (u, u+1)
    u = np.searchsorted(starts, idx, side="right") - 1
    v = u + 1 + (idx - starts[u])
    return np.column_stack((u, v))


def _random_subset(pool: list, m: int, rng) -> list:
    chosen = set()
    while len(chosen) < m:
        chosen.add(pool[int(rng.integers(len(pool)))])
    return sorted(chosen)


def gen_topology(spec: TopologySpec, *, sbm_probs=None) -> SparseGraph:
    """Draw one graph from the named family; never adds self-loops.

    ``sbm_probs`` optionally overrides the two-block within/between
    probabilities (testing hook for degenerate deterministic cases).
    """
    n, deg, kind = spec.n, spec.avg_degree, spec.kind
    rng = np.random.default_rng(spec.seed)
    if kind == "ring":
        if n < 3:
            raise ValueError(f"ring needs n >= 3, got {n}")
        edges = [(i, (i + 1) % n) for i in range(n)]
        return build_graph(n, edges)
    if kind == "erdos_renyi":
        if not 0 <= deg < n:
            raise ValueError(f"mean degree must be in [0, n), got {deg}")
        p = deg / n
        idx = _pair_indices_bernoulli(n * (n - 1) // 2, p, rng)
        return build_graph(n, _unrank_within(idx, n))
    if kind == "sbm2":
        if not 0 <= deg < n:
            raise ValueError(f"mean degree must be in [0, n), got {deg}")
        if sbm_probs is None:
            p_in, p_out = 0.55 * deg / n, 0.055 * deg / n
        else:
            p_in, p_out = sbm_probs
        n1 = (n + 1) // 2
        n2 = n - n1
        first = _unrank_within(
            _pair_indices_bernoulli(n1 * (n1 - 1) // 2, p_in, rng), n1)
        second = n1 + _unrank_within(
            _pair_indices_bernoulli(n2 * (n2 - 1) // 2, p_in, rng), n2)
        across = np.array(_pair_indices_bernoulli(n1 * n2, p_out, rng),
                          dtype=np.int64)
        between = np.column_stack((across // n2, n1 + across % n2)) \
            if across.size else np.empty((0, 2), dtype=np.int64)
        edges = np.concatenate([first, second, between], axis=0)
        return build_graph(n, edges)
    if kind == "rgg":
        if deg <= 0:
            raise ValueError(f"mean degree must be positive, got {deg}")
        radius = math.sqrt(deg / (math.pi * n))
        points = rng.random((n, 2))
        pairs = cKDTree(points).query_pairs(radius, output_type="ndarray")
        return build_graph(n, [tuple(p) for p in pairs])
    # barabasi_albert
    m = int(deg // 2)
    if m < 1:
        raise ValueError(
            f"preferential attachment needs floor(avg_degree/2) >= 1, got {deg}")
    if n <= m:
        raise ValueError(f"need n > {m} nodes for attachment count {m}")
    edges = []
    targets = list(range(m))
    repeated: list = []
    for source in range(m, n):
        edges.extend((source, t) for t in targets)
        repeated.extend(targets)
        repeated.extend([source] * m)
        targets = _random_subset(repeated, m, rng)
    return build_graph(n, edges)


# ---------------------------------------------------------------------------
# features and targets


def sample_features(n: int, d: int, dist: str = "uniform01",
                    sigma: float = 1.0, seed: int = 0) -> np.ndarray:
    """iid feature matrix from the named law."""
    if n < 1 or d < 1:
        raise ValueError(f"need positive shape, got ({n}, {d})")
    rng = np.random.default_rng(seed)
    if dist == "uniform01":
        return rng.random((n, d))
    if dist == "gaussian":
        if not sigma > 0:
            raise ValueError(f"sigma must be positive, got {sigma}")
        return rng.normal(0.0, sigma, size=(n, d))
    raise ValueError(f"unknown feature distribution {dist!r}")


@dataclass(frozen=True)
class HolderTarget:
    """Rough 1-d map: a fixed random walk path on a uniform grid of [0, 1],
    read off at sigmoid(z / scale) with linear interpolation.

    The path has independent Gaussian increments of variance 1/grid, which
    makes the map continuous but nowhere smooth (local regularity about a
    half derivative).
    """

    grid_values: np.ndarray
    scale: float = 1.0

    def __post_init__(self):
        gv = np.ascontiguousarray(self.grid_values, dtype=np.float64)
        gv.flags.writeable = False
        object.__setattr__(self, "grid_values", gv)
        if gv[0] != 0.0:
            raise ValueError("path must start at 0")
        if not self.scale > 0:
            raise ValueError(f"scale must be positive, got {self.scale}")

    def __call__(self, Z: np.ndarray) -> np.ndarray:
        """Evaluate row-wise; rows with several columns are averaged first."""
        Z = np.asarray(Z, dtype=np.float64)
        z = Z if Z.ndim == 1 else Z.mean(axis=1)
        u = expit(z / self.scale)
        grid = np.linspace(0.0, 1.0, self.grid_values.size)
        return np.interp(u, grid, self.grid_values)


def brownian_target(seed: int, scale: float = 1.0) -> HolderTarget:
    """Sample the reference path: cumulative sums of 2^12 iid Gaussian
    increments with variance 2^-12, prepended with 0."""
    if not scale > 0:
        raise ValueError(f"scale must be positive, got {scale}")
    rng = np.random.default_rng(seed)
    increments = rng.normal(0.0, math.sqrt(1.0 / BROWNIAN_GRID), BROWNIAN_GRID)
    values = np.concatenate(([0.0], np.cumsum(increments)))
    return HolderTarget(values, scale)


@dataclass(frozen=True)
class RandomDnnTarget:
    """Frozen residual ReLU network with seeded Gaussian parameters."""

    W_in: np.ndarray
    b_in: np.ndarray
    W_res: tuple
    b_res: tuple
    w_out: np.ndarray
    b_out: float

    def __call__(self, Z: np.ndarray) -> np.ndarray:
        Z = np.asarray(Z, dtype=np.float64)
        if Z.ndim == 1:
            Z = Z[:, None]
        h = Z @ self.W_in + self.b_in
        for W, b in zip(self.W_res, self.b_res):
            h = np.maximum(h @ W + b, 0.0) + h
        return h @ self.w_out + self.b_out


def random_dnn_target(d: int, depth: int = 2, width: int = 32,
                      seed: int = 0, zero_bias: bool = False) -> RandomDnnTarget:
    """Draw a frozen residual ReLU target; callers standardize its outputs
    over the realized nodes.  ``zero_bias`` pins all biases to 0 (testing
    hook)."""
    if depth < 1:
        raise ValueError(f"depth must be >= 1, got {depth}")
    rng = np.random.default_rng(seed)
    scale_in = 1.0 / math.sqrt(d)
    scale_hidden = 1.0 / math.sqrt(width)
    W_in = rng.normal(0.0, scale_in, size=(d, width))
    b_in = np.zeros(width) if zero_bias else rng.normal(0.0, 0.1, size=width)
    W_res, b_res = [], []
    for _ in range(depth):
        W_res.append(rng.normal(0.0, scale_hidden, size=(width, width)))
        b_res.append(np.zeros(width) if zero_bias
                     else rng.normal(0.0, 0.1, size=width))
    w_out = rng.normal(0.0, scale_hidden, size=(width, 1))
    b_out = 0.0 if zero_bias else float(rng.normal(0.0, 0.1))
    return RandomDnnTarget(W_in, b_in, tuple(W_res), tuple(b_res), w_out, b_out)


# ---------------------------------------------------------------------------
# datasets


@dataclass
class Dataset:
    """A complete training problem: graph, operator, two feature copies,
    noisy and clean responses, observation mask, and generator metadata."""

    graph: SparseGraph
    op: PropagationOperator
    X: np.ndarray
    X_fresh: np.ndarray
    y: np.ndarray
    y_clean: np.ndarray
    y_clean_fresh: np.ndarray
    mask: MaskVector
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.graph.n

    @property
    def d(self) -> int:
        return self.X.shape[1]


TARGET_KINDS = ("brownian", "random_dnn", "identity")


def _build_target(target_kind: str, d: int, seed: int, scale: float,
                  dnn_depth: int, dnn_width: int):
    if target_kind == "brownian":
        return brownian_target(seed, scale)
    if target_kind == "random_dnn":
        return random_dnn_target(d, depth=dnn_depth, width=dnn_width, seed=seed)
    if target_kind == "identity":
        return lambda Z: np.asarray(Z, dtype=np.float64).mean(axis=1)
    raise ValueError(f"unknown target kind {target_kind!r}")


def _clean_targets(target_kind, target, Z, stats):
    """Apply the target map, with standardization for the DNN family."""
    if target_kind == "random_dnn":
        z_mean, z_std, y_mean, y_std = stats
        Zs = (Z - z_mean) / z_std
        raw = np.asarray(target(Zs), dtype=np.float64).ravel()
        return (raw - y_mean) / y_std
    return np.asarray(target(Z), dtype=np.float64).ravel()


def make_synthetic(topology: TopologySpec, d: int, k: int,
                   target_kind: str = "brownian",
                   op_kind: str = "neigh_avg",
                   pi: float = 0.9,
                   noise_sigma: float = 1.0,
                   seed: int = 0,
                   feature_dist: str | None = None,
                   feature_sigma: float = 1.0,
                   scale: float = 1.0,
                   dnn_depth: int = 2,
                   dnn_width: int = 32,
                   target_seed: int | None = None,
                   theta_seed: int | None = None) -> Dataset:
    """Assemble a dataset from the compositional generative model.

    Responses are the target map applied to a random polynomial filter of
    the features (coefficients uniform on [0, 1], normalized to unit l1
    mass), plus Gaussian noise on the training copy only.  The propagation
    operator is built on the self-looped graph for every kind, matching the
    self-looped adjacency convention of the operator families involved.

    ``target_seed`` and ``theta_seed`` default to children of ``seed`` but
    can be pinned explicitly, so experiment sweeps can hold the regression
    function fixed while the graph, features, noise, and mask vary
    (common-random-target variance reduction).

    For the ``random_dnn`` target, filter outputs are standardized
    column-wise and the raw targets standardized over nodes; both affine
    maps use the training copy's statistics and are reapplied verbatim to
    the fresh copy, so one fixed regression function underlies both copies.
    """
    if target_kind not in TARGET_KINDS:
        raise ValueError(f"unknown target kind {target_kind!r}")
    if k < 1:
        raise ValueError(f"filter order must be >= 1, got {k}")
    if noise_sigma < 0:
        raise ValueError(f"noise level must be >= 0, got {noise_sigma}")
    if feature_dist is None:
        feature_dist = "uniform01" if target_kind == "brownian" else "gaussian"

    graph_seed = derive_seed(seed, "graph", topology.seed)
    base = gen_topology(TopologySpec(topology.kind, topology.n,
                                     topology.avg_degree, graph_seed))
    looped = base.with_self_loops()
    op = propagation_operator(looped, op_kind)

    if theta_seed is None:
        theta_seed = derive_seed(seed, "theta")
    if target_seed is None:
        target_seed = derive_seed(seed, "target")
    rng_theta = np.random.default_rng(theta_seed)
    theta = rng_theta.random(k)
    theta = theta / np.abs(theta).sum()
    coeffs = FilterCoefficients(theta, beta=1.0)

    n = topology.n
    X = sample_features(n, d, feature_dist, feature_sigma,
                        derive_seed(seed, "x"))
    X_fresh = sample_features(n, d, feature_dist, feature_sigma,
                              derive_seed(seed, "x_fresh"))
    Z = polynomial_propagate(op, coeffs, X)
    Z_fresh = polynomial_propagate(op, coeffs, X_fresh)

    target = _build_target(target_kind, d, target_seed, scale,
                           dnn_depth, dnn_width)
    stats = None
    if target_kind == "random_dnn":
        z_mean = Z.mean(axis=0)
        z_std = Z.std(axis=0)
        z_std = np.where(z_std > 0, z_std, 1.0)
        raw = np.asarray(target((Z - z_mean) / z_std), dtype=np.float64).ravel()
        y_mean = raw.mean()
        y_std = raw.std()
        if y_std == 0:
            y_std = 1.0
        stats = (z_mean, z_std, y_mean, y_std)
    y_clean = _clean_targets(target_kind, target, Z, stats)
    y_clean_fresh = _clean_targets(target_kind, target, Z_fresh, stats)

    rng_noise = np.random.default_rng(derive_seed(seed, "noise"))
    y = y_clean + noise_sigma * rng_noise.standard_normal(n)
    mask = sample_mask(n, pi, derive_seed(seed, "mask"))

    meta = {
        "generator": "synthetic",
        "schema_version": 1,
        "topology": topology.kind,
        "n": n,
        "avg_degree": topology.avg_degree,
        "topology_seed": topology.seed,
        "d": d,
        "k": k,
        "theta": [float(t) for t in theta],
        "target_kind": target_kind,
        "op_kind": op_kind,
        "pi": pi,
        "noise_sigma": noise_sigma,
        "seed": seed,
        "target_seed": target_seed,
        "theta_seed": theta_seed,
        "feature_dist": feature_dist,
        "feature_sigma": feature_sigma,
        "scale": scale,
        "dnn_depth": dnn_depth,
        "dnn_width": dnn_width,
        "self_loops": True,
        "transductive": False,
        "laplacian_energy": laplacian_energy(base, y_clean),
        "realized_avg_degree": float(base.degrees.mean()),
        "realized_max_degree": int(base.degrees.max()),
    }
    if stats is not None:
        meta["z_mean"] = [float(v) for v in stats[0]]
        meta["z_std"] = [float(v) for v in stats[1]]
        meta["y_mean"] = float(stats[2])
        meta["y_std"] = float(stats[3])
    return Dataset(looped, op, X, X_fresh, y, y_clean, y_clean_fresh,
                   mask, meta)


# ---------------------------------------------------------------------------
# on-disk bundles


def _write_feature_csv(path, X: np.ndarray) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(f"f{j}" for j in range(X.shape[1])) + "\n")
        for row in X:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def _read_feature_csv(path) -> np.ndarray:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    if not rows:
        raise FormatError(f"{path}: no data rows")
    if any(len(r) != len(header) for r in rows):
        raise FormatError(f"{path}: ragged rows")
    return np.array([[float(v) for v in r] for r in rows])


def export_bundle(ds: Dataset, out_dir) -> None:
    """Write a dataset as edges.txt, features[.fresh].csv, targets.csv, and
    meta.json.  Float columns round-trip exactly (shortest repr)."""
    os.makedirs(out_dir, exist_ok=True)
    write_edge_list(os.path.join(out_dir, "edges.txt"), ds.graph)
    _write_feature_csv(os.path.join(out_dir, "features.csv"), ds.X)
    _write_feature_csv(os.path.join(out_dir, "features_fresh.csv"), ds.X_fresh)
    with open(os.path.join(out_dir, "targets.csv"), "w", encoding="utf-8") as fh:
        fh.write("node,y,y_clean,observed\n")
        for i in range(ds.n):
            fh.write(f"{i},{repr(float(ds.y[i]))},"
                     f"{repr(float(ds.y_clean[i]))},"
                     f"{int(ds.mask.omega[i])}\n")
    with open(os.path.join(out_dir, "meta.json"), "w", encoding="utf-8") as fh:
        json.dump(ds.meta, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_bundle(bundle_dir) -> Dataset:
    """Inverse of :func:`export_bundle`.

    Fresh-copy clean targets are not stored in the bundle; for synthetic
    bundles they are regenerated from the recorded generator parameters
    (bitwise identical, since the same seeded code path runs again).  For
    non-synthetic bundles the clean targets fall back to the stored ones.
    """
    with open(os.path.join(bundle_dir, "meta.json"), "r", encoding="utf-8") as fh:
        meta = json.load(fh)
    n = int(meta["n"])
    base = read_edge_list(os.path.join(bundle_dir, "edges.txt"), n=n)
    graph = base.with_self_loops() if meta.get("self_loops", True) else base
    op = propagation_operator(graph, meta["op_kind"])
    X = _read_feature_csv(os.path.join(bundle_dir, "features.csv"))
    X_fresh = _read_feature_csv(os.path.join(bundle_dir, "features_fresh.csv"))

    path = os.path.join(bundle_dir, "targets.csv")
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "node,y,y_clean,observed":
            raise FormatError(f"{path}: unexpected header {header!r}")
        y = np.empty(n)
        y_clean = np.empty(n)
        omega = np.zeros(n, dtype=bool)
        count = 0
        for line in fh:
            if not line.strip():
                continue
            node_s, y_s, yc_s, obs_s = line.strip().split(",")
            i = int(node_s)
            y[i] = float(y_s)
            y_clean[i] = float(yc_s)
            omega[i] = bool(int(obs_s))
            count += 1
    if count != n:
        raise FormatError(f"{path}: expected {n} rows, found {count}")
    mask = MaskVector(omega, float(meta["pi"]))

    if meta.get("generator") == "synthetic":
        coeffs = FilterCoefficients(np.array(meta["theta"]), beta=1.0)
        Z_fresh = polynomial_propagate(op, coeffs, X_fresh)
        target = _build_target(meta["target_kind"], int(meta["d"]),
                               int(meta["target_seed"]),
                               float(meta["scale"]), int(meta["dnn_depth"]),
                               int(meta["dnn_width"]))
        stats = None
        if meta["target_kind"] == "random_dnn":
            stats = (np.array(meta["z_mean"]), np.array(meta["z_std"]),
                     float(meta["y_mean"]), float(meta["y_std"]))
        y_clean_fresh = _clean_targets(meta["target_kind"], target,
                                       Z_fresh, stats)
    else:
        y_clean_fresh = y_clean.copy()
    return Dataset(graph, op, X, X_fresh, y, y_clean, y_clean_fresh,
                   mask, meta)


def datasets_equal(a: Dataset, b: Dataset) -> bool:
    """Exact equality of all arrays, the graph, the mask, and the metadata."""
    if a.n != b.n or a.graph.self_loops != b.graph.self_loops:
        return False
    if any(not np.array_equal(x, y)
           for x, y in zip(a.graph.adjacency, b.graph.adjacency)):
        return False
    arrays = (
        (a.X, b.X), (a.X_fresh, b.X_fresh), (a.y, b.y),
        (a.y_clean, b.y_clean), (a.y_clean_fresh, b.y_clean_fresh),
        (a.mask.omega, b.mask.omega),
    )
    if any(not np.array_equal(x, y) for x, y in arrays):
        return False
    return a.mask.pi == b.mask.pi and a.meta == b.meta and a.op.kind == b.op.kind
