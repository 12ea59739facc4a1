"""Real-dataset ingestion.

Two corpora are supported: a housing table embedded in a spatial k-NN
graph, and a hyperlinked page network with sparse bag-of-nouns features.
Both produce a transductive :class:`~gnnreg.datagen.Dataset` (the fresh
feature copy aliases the original one and clean targets alias the observed
labels), flagged as such in ``meta``.
"""

from __future__ import annotations

import csv
import json
import os

import numpy as np

from .baselines import laplacian_energy
from .datagen import Dataset
from .errors import FormatError
from .graph import build_graph, knn_graph
from .operators import propagation_operator
from .training import MaskVector

CALIFORNIA_FEATURES = ("MedInc", "HouseAge", "AveRooms", "AveBedrms",
                       "Population", "AveOccup", "Latitude", "Longitude")
CALIFORNIA_TARGET = "MedHouseVal"


def bundled_california_sample() -> str:
    """Path of the 500-row sample table shipped with the package (synthetic
    values in the real file's format)."""
    return os.path.join(os.path.dirname(__file__), "data",
                        "california_sample.csv")


def _standardize_columns(X: np.ndarray) -> np.ndarray:
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    std = np.where(std > 0, std, 1.0)
    return (X - mean) / std


def ingest_california(csv_path, k: int = 10,
                      op_kind: str = "sym_norm") -> Dataset:
    """Housing table -> standardized features on a spatial k-NN graph.

    The CSV needs a header with the eight canonical attribute columns plus
    the target column; the k-NN graph is built on raw (Latitude, Longitude)
    and symmetrized by union, so every node ends with degree >= k.
    """
    with open(csv_path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in (*CALIFORNIA_FEATURES, CALIFORNIA_TARGET):
            if col not in header:
                raise FormatError(f"{csv_path}: missing column {col!r}")
        feats, targets = [], []
        for i, rec in enumerate(reader):
            try:
                feats.append([float(rec[c]) for c in CALIFORNIA_FEATURES])
                targets.append(float(rec[CALIFORNIA_TARGET]))
            except (TypeError, ValueError):
                raise FormatError(
                    f"{csv_path}: non-numeric cell in data row {i}") from None
    if not feats:
        raise FormatError(f"{csv_path}: no data rows")
    X_raw = np.array(feats)
    y = np.array(targets)
    n = X_raw.shape[0]
    lat = CALIFORNIA_FEATURES.index("Latitude")
    lon = CALIFORNIA_FEATURES.index("Longitude")
    coords = X_raw[:, (lat, lon)]
    base = knn_graph(coords, k)
    graph = base.with_self_loops()
    op = propagation_operator(graph, op_kind)
    X = _standardize_columns(X_raw)
    mask = MaskVector(np.ones(n, dtype=bool), 1.0)
    meta = {
        "generator": "california",
        "schema_version": 1,
        "n": n,
        "d": X.shape[1],
        "knn_k": k,
        "op_kind": op_kind,
        "pi": 1.0,
        "self_loops": True,
        "transductive": True,
        "laplacian_energy": laplacian_energy(base, y),
        "realized_avg_degree": float(base.degrees.mean()),
        "realized_max_degree": int(base.degrees.max()),
    }
    return Dataset(graph, op, X, X, y, y.copy(), y.copy(), mask, meta)


def ingest_chameleon(edges_path, features_path, target_path,
                     op_kind: str = "sym_norm") -> Dataset:
    """Page network -> dense 0/1 noun-indicator features, log traffic target.

    ``edges_path``: CSV of node-id pairs with a header row.
    ``features_path``: JSON object mapping node id -> list of noun ids.
    ``target_path``: CSV with id and target columns (header row).
    Targets are log(1 + traffic), then standardized.
    """
    with open(target_path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        next(reader, None)  # header
        traffic = {}
        for rec in reader:
            if not rec:
                continue
            traffic[int(rec[0])] = float(rec[1])
    if not traffic:
        raise FormatError(f"{target_path}: no target rows")
    n = 1 + max(traffic)
    if set(traffic) != set(range(n)):
        missing = sorted(set(range(n)) - set(traffic))[0]
        raise FormatError(f"{target_path}: missing target for node {missing}")

    with open(features_path, "r", encoding="utf-8") as fh:
        noun_lists = json.load(fh)
    noun_lists = {int(k): v for k, v in noun_lists.items()}
    bad = [i for i in noun_lists if i < 0 or i >= n]
    if bad:
        raise FormatError(f"{features_path}: dangling node id {bad[0]}")
    n_nouns = 1 + max((max(v) for v in noun_lists.values() if v), default=-1)
    if n_nouns <= 0:
        raise FormatError(f"{features_path}: no noun ids present")
    X = np.zeros((n, n_nouns))
    for i, nouns in noun_lists.items():
        X[i, nouns] = 1.0

    edges = []
    with open(edges_path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        next(reader, None)  # header
        for rec in reader:
            if not rec:
                continue
            u, v = int(rec[0]), int(rec[1])
            if u >= n or v >= n or u < 0 or v < 0:
                raise FormatError(f"{edges_path}: dangling node id "
                                  f"{max(u, v)}")
            edges.append((u, v))
    base = build_graph(n, edges)
    graph = base.with_self_loops()
    op = propagation_operator(graph, op_kind)

    y_raw = np.log1p(np.array([traffic[i] for i in range(n)]))
    y_std = y_raw.std()
    y = (y_raw - y_raw.mean()) / (y_std if y_std > 0 else 1.0)
    mask = MaskVector(np.ones(n, dtype=bool), 1.0)
    meta = {
        "generator": "chameleon",
        "schema_version": 1,
        "n": n,
        "d": n_nouns,
        "op_kind": op_kind,
        "pi": 1.0,
        "self_loops": True,
        "transductive": True,
        "laplacian_energy": laplacian_energy(base, y),
        "realized_avg_degree": float(base.degrees.mean()),
        "realized_max_degree": int(base.degrees.max()),
        "num_edges": base.num_edges,
    }
    return Dataset(graph, op, X, X, y, y.copy(), y.copy(), mask, meta)


def load_real_dataset(data_cfg: dict) -> Dataset:
    """Dispatch on the experiment config's dataset name."""
    name = data_cfg.get("dataset", "california")
    op_kind = data_cfg.get("op_kind", "sym_norm")
    if name == "california":
        path = data_cfg.get("path") or bundled_california_sample()
        return ingest_california(path, k=int(data_cfg.get("knn_k", 10)),
                                 op_kind=op_kind)
    if name == "chameleon":
        for key in ("edges_path", "features_path", "target_path"):
            if not data_cfg.get(key):
                raise ValueError(f"chameleon ingestion needs {key}")
        return ingest_chameleon(data_cfg["edges_path"],
                                data_cfg["features_path"],
                                data_cfg["target_path"], op_kind=op_kind)
    raise ValueError(f"unknown real dataset {name!r}")
