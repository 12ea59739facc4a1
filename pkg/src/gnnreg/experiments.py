"""Config-driven experiment runner.

A *cell* is one (factor combination, trial) pair; its seed is a pure
function of the master seed and the factor tuple, so any cell can be rerun
in isolation and reproduces its rows exactly.  Cells are independent and
may execute concurrently; output rows are canonically sorted afterwards,
so the results never depend on scheduling.
"""

from __future__ import annotations

import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .datagen import Dataset, TopologySpec, make_synthetic
from .estimators import (
    GnnNodeRegressor,
    LabelPropagationRegressor,
    MlpNodeRegressor,
    MultiscaleNodeRegressor,
    TikhonovRegressor,
)
from .seeding import derive_seed
from .theory import dependency_partition
from .training import TrainConfig

STUDIES = ("convergence", "label_fraction", "topology", "degree", "real")
METHODS = ("gnn_skip", "gnn_noskip", "mlp", "multiscale", "tikhonov",
           "label_prop")
INDUCTIVE_METHODS = ("gnn_skip", "gnn_noskip", "mlp", "multiscale")

RESULT_COLUMNS = ("study", "topology", "n", "pi", "avg_degree", "max_degree",
                  "operator", "method", "trial", "train_mse", "test_mse",
                  "m", "r", "laplacian_energy", "wall_time_s", "status")


@dataclass
class SlopeFit:
    """Ordinary least squares of log y on log x."""

    slope: float
    intercept: float
    r_squared: float
    n_points: int


def fit_slope(xs, ys) -> SlopeFit:
    """Closed-form log-log regression; requires positive data and at least
    two distinct x values."""
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if xs.shape != ys.shape or xs.ndim != 1:
        raise ValueError("xs and ys must be equal-length vectors")
    if xs.size < 2 or np.unique(xs).size < 2:
        raise ValueError("need at least two distinct x values")
    if (xs <= 0).any() or (ys <= 0).any():
        raise ValueError("log-log fit needs positive inputs")
    lx, ly = np.log(xs), np.log(ys)
    lx_c = lx - lx.mean()
    ly_c = ly - ly.mean()
    sxx = float(lx_c @ lx_c)
    slope = float(lx_c @ ly_c) / sxx
    intercept = float(ly.mean() - slope * lx.mean())
    ss_res = float(((ly_c - slope * lx_c) ** 2).sum())
    ss_tot = float(ly_c @ ly_c)
    r2 = 1.0 if ss_tot == 0.0 else max(0.0, 1.0 - ss_res / ss_tot)
    return SlopeFit(slope, intercept, r2, int(xs.size))


# ---------------------------------------------------------------------------
# configuration


def _default_data() -> dict:
    return {
        "topology": "ring",
        "n": 1000,
        "avg_degree": 2.0,
        "d": 1,
        "k": 2,
        "target_kind": "brownian",
        "op_kind": "neigh_avg",
        "noise_sigma": 1.0,
        "scale": 1.0,
        "dnn_depth": 2,
        "dnn_width": 32,
        "topologies": ["erdos_renyi", "sbm2", "rgg", "barabasi_albert"],
        "operators": ["sym_norm", "row_norm", "raw_adj"],
        # real-data parameters
        "dataset": "california",
        "path": None,
        "edges_path": None,
        "features_path": None,
        "target_path": None,
        "knn_k": 10,
        "calibration_fraction": 0.1,
    }


def _default_model() -> dict:
    return {
        "conv_depth": 2,
        "hops": 2,
        "hidden": [32, 32],
        "width_policy": "fixed",   # or "sqrt": hidden = round(scale*sqrt(n))
        "width_scale": 1.0,
        "width_layers": 1,
        "width_min": 8,
        "width_max": 64,
        "f_trunc": 10.0,
        "tikhonov_lam": 1.0,
        "label_prop_alpha": 0.9,
        "label_prop_iters": 1000,
        # calibration grids for the real study
        "conv_depth_grid": [1, 2],
        "mlp_depth_grid": [1, 2],
        "hops_grid": [1, 2],
        "tikhonov_lam_grid": [0.1, 1.0, 10.0],
        "label_prop_alpha_grid": [0.5, 0.9, 0.99],
    }


@dataclass
class ExperimentConfig:
    """Everything one study run needs; serializable as a flat JSON/YAML
    document."""

    study: str
    n_grid: list = field(default_factory=lambda: [200, 400, 800])
    pi_grid: list = field(default_factory=lambda: [0.95])
    degree_grid: list = field(default_factory=lambda: [2.0, 4.0, 6.0, 8.0])
    trials: int = 3
    methods: list = field(default_factory=lambda: ["gnn_skip", "mlp"])
    data: dict = field(default_factory=dict)
    model: dict = field(default_factory=dict)
    train: TrainConfig = field(default_factory=TrainConfig)
    master_seed: int = 0
    out_dir: str = "out"
    workers: int = 0  # 0 = available parallelism

    def __post_init__(self):
        if self.study not in STUDIES:
            raise ValueError(f"unknown study {self.study!r}")
        if self.trials < 1:
            raise ValueError(f"trials must be >= 1, got {self.trials}")
        for name, grid in (("n_grid", self.n_grid), ("pi_grid", self.pi_grid),
                           ("degree_grid", self.degree_grid)):
            if not grid:
                raise ValueError(f"{name} must be nonempty")
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ValueError(f"unknown methods {bad}; choose from {METHODS}")
        if not self.methods:
            raise ValueError("methods must be nonempty")
        data = _default_data()
        data.update(self.data)
        self.data = data
        model = _default_model()
        model.update(self.model)
        self.model = model
        if isinstance(self.train, dict):
            self.train = TrainConfig(**self.train)

    def to_dict(self) -> dict:
        return {
            "study": self.study, "n_grid": list(self.n_grid),
            "pi_grid": list(self.pi_grid),
            "degree_grid": list(self.degree_grid), "trials": self.trials,
            "methods": list(self.methods), "data": dict(self.data),
            "model": dict(self.model), "train": vars(self.train).copy(),
            "master_seed": self.master_seed, "out_dir": self.out_dir,
            "workers": self.workers,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        doc = dict(doc)
        if "train" in doc and isinstance(doc["train"], dict):
            doc["train"] = TrainConfig(**doc["train"])
        return cls(**doc)


# ---------------------------------------------------------------------------
# factors and cells


@dataclass(frozen=True)
class Factors:
    """One point of a study's factor grid (trial excluded)."""

    topology: str
    n: int
    pi: float
    avg_degree: float
    operator: str


def factor_grid(cfg: ExperimentConfig) -> list:
    data = cfg.data
    if cfg.study in ("convergence", "label_fraction"):
        return [Factors(data["topology"], int(n), float(pi),
                        float(data["avg_degree"]), data["op_kind"])
                for n in cfg.n_grid for pi in cfg.pi_grid]
    if cfg.study == "topology":
        return [Factors(topo, int(data["n"]), float(pi),
                        float(data["avg_degree"]), data["op_kind"])
                for topo in data["topologies"] for pi in cfg.pi_grid]
    if cfg.study == "degree":
        return [Factors("barabasi_albert", int(data["n"]), float(cfg.pi_grid[0]),
                        float(deg), op)
                for op in data["operators"] for deg in cfg.degree_grid]
    # real
    return [Factors(data["dataset"], 0, float(pi), 0.0, data["op_kind"])
            for pi in cfg.pi_grid]


def cell_seed(cfg: ExperimentConfig, f: Factors, trial: int) -> int:
    return derive_seed(cfg.master_seed, cfg.study, f.topology, f.n, f.pi,
                       f.avg_degree, f.operator, trial)


def dataset_seed(cfg: ExperimentConfig, f: Factors, trial: int) -> int:
    """Dataset randomness is independent across trials and across the
    structural axes (topology family, target mean degree) but shared across
    the sample-size axes (n, pi) and across operator arms.

    Sharing along n and pi is the usual common-random-numbers design for
    learning curves: feature, noise, and mask vectors at smaller n are
    prefixes of those at larger n, and masks at lower pi observe subsets of
    those at higher pi, so per-trial curves are comparable point by point.
    Operator arms see identical graphs, features, noise, and masks (matched
    generation).  Structural arms get fresh draws, so comparisons across
    degrees or topologies rest on independent replicates."""
    return derive_seed(cfg.master_seed, cfg.study, f.topology, f.avg_degree,
                       trial, "data")


def _resolve_hidden(model: dict, n: int) -> tuple:
    if model["width_policy"] == "sqrt":
        width = int(round(model["width_scale"] * math.sqrt(n)))
        width = min(max(width, model["width_min"]), model["width_max"])
        return (width,) * int(model.get("width_layers", 1))
    return tuple(model["hidden"])


def _train_kwargs(train: TrainConfig, seed: int) -> dict:
    return {"epochs": train.epochs, "step_size": train.step_size,
            "optimizer": train.optimizer, "project": train.project,
            "loss_norm": train.loss_norm, "seed": seed}


def make_estimator(method: str, graph, op_kind: str, model: dict,
                   train: TrainConfig, seed: int, n: int, **overrides):
    """Instantiate the estimator for a method name.

    ``overrides`` replaces method hyperparameters (used by the calibration
    loop of the real study), e.g. ``conv_depth=1`` or ``lam=0.1``.
    """
    hidden = overrides.pop("hidden", _resolve_hidden(model, n))
    kw = _train_kwargs(train, seed)
    if method == "gnn_skip" or method == "gnn_noskip":
        depth = overrides.pop("conv_depth", model["conv_depth"])
        return GnnNodeRegressor(graph=graph, operator_kind=op_kind,
                                conv_depth=depth, hidden=hidden,
                                skip=(method == "gnn_skip"),
                                f_trunc=model["f_trunc"], **kw)
    if method == "mlp":
        return MlpNodeRegressor(hidden=hidden, f_trunc=model["f_trunc"], **kw)
    if method == "multiscale":
        hops = overrides.pop("hops", model["hops"])
        kw.pop("project")
        return MultiscaleNodeRegressor(graph=graph, hops=hops, hidden=hidden,
                                       f_trunc=model["f_trunc"], **kw)
    if method == "tikhonov":
        lam = overrides.pop("lam", model["tikhonov_lam"])
        return TikhonovRegressor(graph=graph, lam=lam)
    if method == "label_prop":
        alpha = overrides.pop("alpha", model["label_prop_alpha"])
        return LabelPropagationRegressor(graph=graph, alpha=alpha,
                                         iters=model["label_prop_iters"])
    raise ValueError(f"unknown method {method!r}")


def _masked_nan(y: np.ndarray, omega: np.ndarray) -> np.ndarray:
    out = np.array(y, dtype=np.float64)
    out[~omega] = np.nan
    return out


def _synthetic_dataset(cfg: ExperimentConfig, f: Factors, trial: int) -> Dataset:
    data = cfg.data
    seed = dataset_seed(cfg, f, trial)
    spec = TopologySpec(f.topology, f.n, f.avg_degree, seed=0)
    # the regression function (filter + target map) follows the same sharing
    # rule as the data stream: fixed along n/pi sweeps and across operator
    # arms, fresh across structural arms and trials
    return make_synthetic(
        spec, d=int(data["d"]), k=int(data["k"]),
        target_kind=data["target_kind"], op_kind=f.operator, pi=f.pi,
        noise_sigma=float(data["noise_sigma"]), seed=seed,
        scale=float(data["scale"]), dnn_depth=int(data["dnn_depth"]),
        dnn_width=int(data["dnn_width"]),
        target_seed=derive_seed(cfg.master_seed, cfg.study, f.topology,
                                f.avg_degree, trial, "target"),
        theta_seed=derive_seed(cfg.master_seed, cfg.study, f.topology,
                               f.avg_degree, trial, "theta"))


def _empty_row(cfg: ExperimentConfig, f: Factors, method: str, trial: int) -> dict:
    return {
        "study": cfg.study, "topology": f.topology, "n": f.n, "pi": f.pi,
        "avg_degree": f.avg_degree, "max_degree": 0, "operator": f.operator,
        "method": method, "trial": trial, "train_mse": float("nan"),
        "test_mse": float("nan"), "m": 0, "r": 0,
        "laplacian_energy": float("nan"), "wall_time_s": 0.0, "status": "ok",
    }


def _sanitize(msg: str) -> str:
    return msg.replace(",", ";").replace("\n", " ")[:200]


def run_cell(cfg: ExperimentConfig, f: Factors, trial: int) -> list:
    """Run every configured method on one cell and return its rows."""
    if cfg.study == "real":
        return _run_real_cell(cfg, f, trial)
    rows = []
    try:
        ds = _synthetic_dataset(cfg, f, trial)
        part = dependency_partition(ds.op, int(cfg.model["conv_depth"]))
        diag = {
            "avg_degree": float(ds.meta["realized_avg_degree"]),
            "max_degree": int(ds.meta["realized_max_degree"]),
            "m": part.m, "r": part.r,
            "laplacian_energy": float(ds.meta["laplacian_energy"]),
        }
    except Exception as exc:  # dataset-level failure poisons all methods
        rows = []
        for method in cfg.methods:
            row = _empty_row(cfg, f, method, trial)
            row["status"] = f"error:{type(exc).__name__}: {_sanitize(str(exc))}"
            rows.append(row)
        return rows

    y_obs = _masked_nan(ds.y, ds.mask.omega)
    for method in cfg.methods:
        row = _empty_row(cfg, f, method, trial)
        row.update(diag)
        started = time.perf_counter()
        try:
            seed = derive_seed(cell_seed(cfg, f, trial), "init", method)
            est = make_estimator(method, ds.graph, f.operator, cfg.model,
                                 cfg.train, seed, f.n)
            est.fit(ds.X, y_obs, mask=ds.mask)
            if method in INDUCTIVE_METHODS:
                pred = est.predict(ds.X_fresh)
                target = ds.y_clean_fresh
            else:
                pred = est.predict()
                target = ds.y_clean
            diff = pred - target
            row["train_mse"] = float(est.train_mse_)
            row["test_mse"] = float(diff @ diff) / target.size
        except Exception as exc:
            row["status"] = f"error:{type(exc).__name__}: {_sanitize(str(exc))}"
        row["wall_time_s"] = time.perf_counter() - started
        rows.append(row)
    return rows


# ---------------------------------------------------------------------------
# the real-data cell (transductive, with calibration-based selection)


def _candidate_grid(method: str, model: dict) -> list:
    if method in ("gnn_skip", "gnn_noskip"):
        return [{"conv_depth": c} for c in model["conv_depth_grid"]]
    if method == "mlp":
        base = tuple(model["hidden"])
        return [{"hidden": base[:depth] if depth <= len(base)
                 else base + base[-1:] * (depth - len(base))}
                for depth in model["mlp_depth_grid"]]
    if method == "multiscale":
        return [{"hops": h} for h in model["hops_grid"]]
    if method == "tikhonov":
        return [{"lam": lam} for lam in model["tikhonov_lam_grid"]]
    if method == "label_prop":
        return [{"alpha": a} for a in model["label_prop_alpha_grid"]]
    return [{}]


def _run_real_cell(cfg: ExperimentConfig, f: Factors, trial: int) -> list:
    from .ingest import load_real_dataset
    from .training import sample_mask

    rows = []
    seed0 = cell_seed(cfg, f, trial)
    try:
        ds = load_real_dataset(cfg.data)
        n = ds.n
        mask = sample_mask(n, f.pi, derive_seed(seed0, "mask"))
        if mask.n_observed == 0 or mask.n_observed == n:
            raise ValueError("mask leaves no train/test split")
        part = dependency_partition(ds.op, int(cfg.model["conv_depth"]))
        base = ds.graph.without_self_loops()
        diag = {
            "avg_degree": float(base.degrees.mean()),
            "max_degree": int(base.degrees.max()),
            "m": part.m, "r": part.r,
            "laplacian_energy": float(ds.meta.get("laplacian_energy",
                                                  float("nan"))),
        }
    except Exception as exc:
        for method in cfg.methods:
            row = _empty_row(cfg, f, method, trial)
            row["n"] = 0
            row["status"] = f"error:{type(exc).__name__}: {_sanitize(str(exc))}"
            rows.append(row)
        return rows

    observed = np.flatnonzero(mask.omega)
    unobserved = np.flatnonzero(~mask.omega)
    rng = np.random.default_rng(derive_seed(seed0, "calibration"))
    calib_size = max(1, int(round(cfg.data["calibration_fraction"]
                                  * observed.size)))
    calib_idx = rng.choice(observed, size=min(calib_size, observed.size - 1),
                           replace=False)
    calib_set = np.zeros(n, dtype=bool)
    calib_set[calib_idx] = True
    fit_omega = mask.omega & ~calib_set

    for method in cfg.methods:
        row = _empty_row(cfg, f, method, trial)
        row["n"] = n
        row.update(diag)
        started = time.perf_counter()
        try:
            seed = derive_seed(seed0, "init", method)
            best, best_err, best_over = None, np.inf, None
            for i, over in enumerate(_candidate_grid(method, cfg.model)):
                est = make_estimator(method, ds.graph, f.operator, cfg.model,
                                     cfg.train, derive_seed(seed, i), n, **over)
                est.fit(ds.X, _masked_nan(ds.y, fit_omega))
                pred = (est.predict(ds.X) if method in INDUCTIVE_METHODS
                        else est.predict())
                err = float(((pred[calib_set] - ds.y[calib_set]) ** 2).mean())
                if err < best_err:
                    best, best_err, best_over = est, err, over
            # refit the selected configuration on all observed nodes
            est = make_estimator(method, ds.graph, f.operator, cfg.model,
                                 cfg.train, seed, n, **dict(best_over))
            est.fit(ds.X, _masked_nan(ds.y, mask.omega))
            pred = (est.predict(ds.X) if method in INDUCTIVE_METHODS
                    else est.predict())
            row["train_mse"] = float(est.train_mse_)
            row["test_mse"] = float(((pred[unobserved] - ds.y[unobserved]) ** 2
                                     ).mean())
        except Exception as exc:
            row["status"] = f"error:{type(exc).__name__}: {_sanitize(str(exc))}"
        row["wall_time_s"] = time.perf_counter() - started
        rows.append(row)
    return rows


# ---------------------------------------------------------------------------
# study drivers


def _row_sort_key(row: dict):
    return (row["study"], row["topology"], row["n"], row["pi"],
            row["avg_degree"], row["operator"], row["method"], row["trial"])


def _worker(args):
    cfg_doc, f, trial = args
    cfg = ExperimentConfig.from_dict(cfg_doc)
    return run_cell(cfg, f, trial)


def run_study(cfg: ExperimentConfig, progress=None) -> list:
    """Run all cells of a study and return canonically ordered rows."""
    cells = [(f, t) for f in factor_grid(cfg) for t in range(cfg.trials)]
    rows = []
    workers = cfg.workers if cfg.workers > 0 else max(1, os.cpu_count() or 1)
    if workers > 1 and len(cells) > 1:
        doc = cfg.to_dict()
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for i, cell_rows in enumerate(
                    pool.map(_worker, [(doc, f, t) for f, t in cells])):
                rows.extend(cell_rows)
                if progress:
                    progress(i + 1, len(cells))
    else:
        for i, (f, t) in enumerate(cells):
            rows.extend(run_cell(cfg, f, t))
            if progress:
                progress(i + 1, len(cells))
    rows.sort(key=_row_sort_key)
    return rows


# convenience wrappers matching the CLI subcommands


def run_convergence(cfg: ExperimentConfig) -> list:
    if cfg.study not in ("convergence", "label_fraction"):
        raise ValueError(f"expected a convergence-style study, got {cfg.study}")
    return run_study(cfg)


def run_topology(cfg: ExperimentConfig) -> list:
    if cfg.study not in ("topology", "degree"):
        raise ValueError(f"expected a topology-style study, got {cfg.study}")
    return run_study(cfg)


def run_real(cfg: ExperimentConfig) -> list:
    if cfg.study != "real":
        raise ValueError(f"expected the real study, got {cfg.study}")
    return run_study(cfg)
