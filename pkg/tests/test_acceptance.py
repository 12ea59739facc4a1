"""Acceptance suite: one test per release criterion.

Each criterion runs at its stated tolerance and prints a PASS line with the
measured values (visible under ``pytest -s``); ``pytest -v`` shows one
pass/fail line per criterion.  The two study-scale criteria (5 and 6) train
a few hundred models and dominate the runtime; the whole module is sized
for roughly ten minutes on two cores.
"""

import math
import time

import numpy as np
import pytest
from scipy import stats as scipy_stats

from gnnreg import (
    ExperimentConfig,
    FilterCoefficients,
    GnnParams,
    TopologySpec,
    dependency_partition,
    embed_polynomial_as_gcn,
    entropy_bound,
    gcn_forward,
    gen_topology,
    gnn_predict,
    gradients,
    init_gnn_params,
    kappa_n,
    masked_mse,
    polynomial_propagate,
    propagation_operator,
    run_cell,
    run_study,
    verify_mismatch,
)
from gnnreg.emit import emit_outputs, slope_summaries, write_results_csv
from gnnreg.experiments import factor_grid
from gnnreg.ingest import bundled_california_sample, ingest_california
from gnnreg.nets import _gcn_layers, _mlp_layers
from gnnreg.operators import OPERATOR_KINDS, PropagationOperator
from gnnreg.theory import _reach_support
from gnnreg.training import MaskVector, _flatten, _flatten_grads
from conftest import random_connected_graph


def _report(criterion, name, detail):
    print(f"[acceptance] criterion {criterion} ({name}): PASS -- {detail}")


# ---------------------------------------------------------------------------
# criterion 1: polynomial filters embed exactly into the convolution class


def test_c01_filter_embedding_exact():
    rng = np.random.default_rng(101)
    started = time.perf_counter()
    worst = 0.0
    for i in range(200):
        n = int(rng.integers(2, 51))
        g = random_connected_graph(rng, n, extra_edges=int(rng.integers(0, n)),
                                   self_loops=True)
        kind = OPERATOR_KINDS[i % len(OPERATOR_KINDS)]
        op = propagation_operator(g, kind)
        d = int(rng.integers(1, 5))
        k = int(rng.integers(1, 4))
        L1 = int(rng.integers(3, 6))
        beta = float(rng.uniform(0.05, 1.0))
        theta = rng.uniform(-beta, beta, k)
        coeffs = FilterCoefficients(theta, beta=beta)
        X = rng.random((n, d))
        a = gcn_forward(embed_polynomial_as_gcn(coeffs, L1, d), op, X)
        b = polynomial_propagate(op, coeffs, X)
        rel = np.abs(a - b).max() / max(1.0, np.abs(b).max())
        worst = max(worst, rel)
    elapsed = time.perf_counter() - started
    assert worst < 1e-12, f"max relative error {worst:.3e}"
    assert elapsed < 5.0, f"runtime {elapsed:.1f}s exceeds 5s"
    _report(1, "filter embedding exact",
            f"200 instances, max rel err {worst:.2e}, {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# criterion 2: operator mismatch bound holds on randomized instances


def _random_study_graph(rng, n):
    kind = ("ring", "erdos_renyi", "barabasi_albert")[int(rng.integers(3))]
    n = max(n, 3 if kind == "ring" else 4)
    deg = float(rng.uniform(2.0, 3.5))
    g = gen_topology(TopologySpec(kind, n, deg, int(rng.integers(1 << 31))))
    return g.with_self_loops()


def test_c02_mismatch_bound_holds():
    rng = np.random.default_rng(202)
    started = time.perf_counter()
    import scipy.sparse as sp

    holds_count = 0
    for _ in range(1000):
        n = int(rng.integers(4, 41))
        g = _random_study_graph(rng, n)
        kind = OPERATOR_KINDS[int(rng.integers(len(OPERATOR_KINDS)))]
        s_op = propagation_operator(g, kind)
        tau = float(rng.uniform(0.0, 1.0))
        coo = s_op.matrix.tocoo()
        noise = rng.normal(size=coo.data.size)
        scale = tau / math.sqrt((noise**2).sum()) if tau > 0 else 0.0
        pert = sp.coo_matrix((noise * scale, (coo.row, coo.col)),
                             shape=coo.shape)
        t_op = PropagationOperator((s_op.matrix + pert).tocsr(), "raw_adj")
        L1 = int(rng.integers(1, 5))
        coeffs = FilterCoefficients(rng.uniform(-1, 1, L1))
        X = rng.random((g.n, int(rng.integers(1, 4))))
        lhs, rhs, holds = verify_mismatch(t_op, s_op, coeffs, X)
        holds_count += bool(holds)
    elapsed = time.perf_counter() - started
    assert holds_count == 1000, f"bound failed on {1000 - holds_count} instances"
    assert elapsed < 30.0, f"runtime {elapsed:.1f}s exceeds 30s"
    _report(2, "mismatch bound verification",
            f"1000/1000 hold, {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# criterion 3: dependency coloring soundness


def test_c03_coloring_soundness():
    rng = np.random.default_rng(303)
    started = time.perf_counter()
    for _ in range(100):
        n = int(rng.integers(3, 201))
        g = _random_study_graph(rng, n)
        kind = OPERATOR_KINDS[int(rng.integers(len(OPERATOR_KINDS)))]
        op = propagation_operator(g, kind)
        L1 = int(rng.integers(1, 4))
        part = dependency_partition(op, L1)
        assert part.r <= part.m * (part.m - 1) + 1
        reach = _reach_support(op, L1).toarray().astype(bool)
        for c in range(part.r):
            members = np.flatnonzero(part.colors == c)
            if members.size < 2:
                continue
            overlap = reach[members].astype(np.int64)
            gram = overlap @ overlap.T
            np.fill_diagonal(gram, 0)
            assert not gram.any(), "same-color losses share a coordinate"
    elapsed = time.perf_counter() - started
    assert elapsed < 60.0, f"runtime {elapsed:.1f}s exceeds 60s"
    _report(3, "coloring soundness", f"100 instances valid, {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# criterion 4: analytic gradients match finite differences


def _activation_pattern(p: GnnParams, op, X) -> np.ndarray:
    _, Z = _gcn_layers(p.gcn, op, X)
    (U_list, V_list, raw), _ = _mlp_layers(p.mlp, Z)
    bits = [V > 0 for V in V_list[:-1]]
    bits.append(np.abs(raw[:, None]) < p.mlp.f_trunc)
    return np.concatenate([b.ravel() for b in bits])


def test_c04_gradient_oracle():
    rng = np.random.default_rng(404)
    started = time.perf_counter()
    h = 1e-5
    checked = 0
    excluded = 0
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(4, 12))
        g = random_connected_graph(rng, n, extra_edges=3, self_loops=True)
        kind = OPERATOR_KINDS[int(rng.integers(len(OPERATOR_KINDS)))]
        op = propagation_operator(g, kind)
        d = int(rng.integers(1, 4))
        hidden = tuple(int(w) for w in
                       rng.integers(2, 6, size=int(rng.integers(1, 3))))
        p = init_gnn_params(d, int(rng.integers(1, 3)), hidden,
                            float(rng.uniform(1.0, 2.0)),
                            seed=int(rng.integers(1 << 31)))
        X = rng.random((n, d))
        y = rng.normal(size=n)
        omega = rng.random(n) < 0.7
        if not omega.any():
            omega[0] = True
        mask = MaskVector(omega, 0.7)
        analytic = _flatten_grads(gradients(p, op, X, y, mask))
        arrays = _flatten(p)

        def loss():
            return masked_mse(gnn_predict(p, op, X), y, mask)

        for arr, grad in zip(arrays, analytic):
            it = np.nditer(arr, flags=["multi_index"])
            for _ in it:
                idx = it.multi_index
                old = arr[idx]
                arr[idx] = old + h
                up = loss()
                pat_up = _activation_pattern(p, op, X)
                arr[idx] = old - h
                down = loss()
                pat_down = _activation_pattern(p, op, X)
                arr[idx] = old
                if not np.array_equal(pat_up, pat_down):
                    excluded += 1  # a kink moved inside the probe window
                    continue
                fd = (up - down) / (2 * h)
                denom = max(abs(fd), abs(grad[idx]), 1.0)
                rel = abs(fd - grad[idx]) / denom
                worst = max(worst, rel)
                checked += 1
    elapsed = time.perf_counter() - started
    assert worst < 1e-4, f"max relative error {worst:.3e}"
    assert checked > 1000
    assert elapsed < 60.0, f"runtime {elapsed:.1f}s exceeds 60s"
    _report(4, "gradient oracle",
            f"{checked} coordinates checked ({excluded} kink-adjacent "
            f"excluded), max rel err {worst:.2e}, {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# criteria 5 and 7 share the calibrated ring setup


def _ring_study_config(out_dir, n_grid, pi, trials, methods):
    return ExperimentConfig.from_dict({
        "study": "convergence", "n_grid": n_grid, "pi_grid": [pi],
        "trials": trials, "methods": methods,
        "data": {"topology": "ring", "d": 1, "k": 1,
                 "target_kind": "brownian", "op_kind": "neigh_avg",
                 "noise_sigma": 1.0, "scale": 0.25},
        "model": {"conv_depth": 2, "width_policy": "sqrt", "width_layers": 1,
                  "width_scale": 1.0, "width_min": 8, "width_max": 64,
                  "f_trunc": 10.0},
        "train": {"epochs": 1000, "step_size": 1e-2, "optimizer": "adam",
                  "project": False, "loss_norm": "over_n"},
        "master_seed": 0, "out_dir": str(out_dir), "workers": 0,
    })


def test_c05_convergence_rate_reproduction(tmp_path):
    started = time.perf_counter()
    cfg = _ring_study_config(tmp_path, [200, 400, 800, 1600, 3200], 0.95, 20,
                             ["gnn_skip"])
    rows = run_study(cfg)
    assert all(r["status"] == "ok" for r in rows)
    slopes = slope_summaries(rows, "convergence")
    assert len(slopes) == 1
    fit = slopes[0][1]
    elapsed = time.perf_counter() - started
    assert -0.65 <= fit.slope <= -0.35, f"slope {fit.slope:.3f} outside band"
    assert fit.r_squared >= 0.9, f"r^2 {fit.r_squared:.3f} below 0.9"
    assert elapsed < 1800.0, f"runtime {elapsed:.0f}s exceeds 30min"
    _report(5, "convergence rate reproduction",
            f"slope {fit.slope:.3f}, r^2 {fit.r_squared:.3f}, "
            f"{elapsed:.0f}s")


def test_c07_gnn_dominates_mlp(tmp_path):
    cfg = _ring_study_config(tmp_path, [1600], 0.75, 20, ["gnn_skip", "mlp"])
    rows = run_study(cfg)
    assert all(r["status"] == "ok" for r in rows)
    by_trial = {}
    for row in rows:
        by_trial.setdefault(row["trial"], {})[row["method"]] = row["test_mse"]
    wins = sum(1 for d in by_trial.values() if d["gnn_skip"] < d["mlp"])
    assert wins >= 16, f"gnn_skip won only {wins}/20 seeds"
    _report(7, "gnn over mlp dominance", f"{wins}/20 seeds")


# ---------------------------------------------------------------------------
# criterion 6: degree sensitivity of the sum operator


def test_c06_degree_sensitivity(tmp_path):
    started = time.perf_counter()
    cfg = ExperimentConfig.from_dict({
        "study": "degree", "degree_grid": [2.0, 4.0, 8.0, 16.0, 24.0],
        "pi_grid": [0.7], "trials": 8, "methods": ["gnn_skip"],
        "data": {"n": 1500, "d": 4, "k": 2, "target_kind": "random_dnn",
                 "noise_sigma": 1.0, "operators": ["raw_adj", "sym_norm"]},
        "model": {"conv_depth": 2, "hidden": [32, 32],
                  "width_policy": "fixed", "f_trunc": 10.0},
        "train": {"epochs": 1500, "step_size": 1e-2, "project": False},
        "master_seed": 0, "out_dir": str(tmp_path), "workers": 0,
    })
    rows = run_study(cfg)
    assert all(r["status"] == "ok" for r in rows)
    rho = {}
    for op_kind in ("raw_adj", "sym_norm"):
        sel = [r for r in rows if r["operator"] == op_kind]
        assert len(sel) >= 20, "need at least 20 (seed, degree) cells"
        rho[op_kind] = scipy_stats.spearmanr(
            [r["max_degree"] for r in sel], [r["test_mse"] for r in sel])
    elapsed = time.perf_counter() - started
    raw_rho, raw_p = rho["raw_adj"]
    sym_rho, _ = rho["sym_norm"]
    assert raw_rho > 0, f"sum-operator correlation not positive: {raw_rho:.3f}"
    assert raw_p < 0.05, f"sum-operator p-value {raw_p:.3g} not significant"
    assert abs(sym_rho) < abs(raw_rho), (
        f"normalized operator correlation |{sym_rho:.3f}| not smaller than "
        f"|{raw_rho:.3f}|")
    assert elapsed < 1200.0, f"runtime {elapsed:.0f}s exceeds 20min"
    _report(6, "degree sensitivity",
            f"raw rho {raw_rho:.3f} (p={raw_p:.2g}), sym rho {sym_rho:.3f}, "
            f"{elapsed:.0f}s")


# ---------------------------------------------------------------------------
# criterion 8: bound formulas are monotone


def test_c08_bound_monotonicity():
    rng = np.random.default_rng(808)
    started = time.perf_counter()
    violations = 0
    for _ in range(1000):
        d = int(rng.integers(1, 4))
        L1 = int(rng.integers(1, 4))
        L2 = int(rng.integers(1, 4))
        width = int(rng.integers(1, 9))
        s = int(rng.integers(2, 20))
        t = float(rng.uniform(0.5, 3.0))
        n = int(rng.integers(10, 10_000))
        delta = float(rng.uniform(0.05, 1.0))
        widths = tuple([d] + [width] * L2 + [1])

        def eb(d_=d, L1_=L1, L2_=L2, s_=s, delta_=delta):
            w = tuple([d_] + [width] * L2_ + [1])
            return entropy_bound(delta_, d_, L1_, L2_, w, s_, t)

        def kn(L1_=L1, L2_=L2, s_=s):
            return kappa_n(n, d, L1_, L2_, s_, t)

        steps = sorted(rng.integers(1, 6, size=3))
        chain_ok = True
        for grow in steps:
            chain_ok &= eb(s_=s + grow) >= eb()
            chain_ok &= eb(L1_=L1 + grow) >= eb()
            chain_ok &= eb(L2_=L2 + grow) >= eb()
            chain_ok &= eb(delta_=delta / (1 + grow)) >= eb()
            chain_ok &= kn(s_=s + grow) >= kn()
            chain_ok &= kn(L1_=L1 + grow) >= kn()
            chain_ok &= kn(L2_=L2 + grow) >= kn()
        violations += not chain_ok
    elapsed = time.perf_counter() - started
    assert violations == 0, f"{violations} monotonicity violations"
    assert elapsed < 5.0, f"runtime {elapsed:.1f}s exceeds 5s"
    _report(8, "bound monotonicity", f"1000 chains, 0 violations, "
            f"{elapsed:.1f}s")


# ---------------------------------------------------------------------------
# criterion 9: experiment cells are reproducible byte for byte
#
# wall_time_s is a measured duration and is masked to a constant before the
# byte comparison; every other field must reproduce exactly.


def _csv_bytes_without_walltime(rows, path):
    masked = []
    for row in rows:
        r = dict(row)
        r["wall_time_s"] = 0.0
        masked.append(r)
    write_results_csv(masked, path)
    return path.read_bytes()


def test_c09_cell_determinism(tmp_path):
    cfg = ExperimentConfig.from_dict({
        "study": "convergence", "n_grid": [50, 100], "pi_grid": [0.8],
        "trials": 2, "methods": ["gnn_skip", "tikhonov", "label_prop"],
        "data": {"topology": "ring", "d": 1, "k": 1,
                 "target_kind": "brownian", "op_kind": "neigh_avg",
                 "scale": 0.25},
        "model": {"conv_depth": 2, "hidden": [6], "width_policy": "fixed"},
        "train": {"epochs": 40, "project": False},
        "master_seed": 31, "out_dir": str(tmp_path), "workers": 2,
    })
    rows = run_study(cfg)
    emit_outputs(rows, cfg.out_dir, cfg.study)
    checked = 0
    for f in factor_grid(cfg):
        for trial in range(cfg.trials):
            rerun = sorted(run_cell(cfg, f, trial),
                           key=lambda r: r["method"])
            original = sorted(
                (r for r in rows if r["n"] == f.n and r["trial"] == trial),
                key=lambda r: r["method"])
            a = _csv_bytes_without_walltime(original, tmp_path / "a.csv")
            b = _csv_bytes_without_walltime(rerun, tmp_path / "b.csv")
            assert a == b, f"cell (n={f.n}, trial={trial}) not reproducible"
            checked += 1
    _report(9, "cell determinism",
            f"{checked} cells reproduce byte-for-byte "
            f"(wall_time_s masked)")


# ---------------------------------------------------------------------------
# criterion 10: real-data pipeline on the bundled sample


def test_c10_real_data_pipeline(tmp_path):
    started = time.perf_counter()
    ds = ingest_california(bundled_california_sample(), k=10)
    assert ds.n == 500
    base = ds.graph.without_self_loops()
    assert base.degrees.min() >= 10
    for i in range(0, 500, 97):
        for j in base.adjacency[i]:
            assert i in base.adjacency[j]

    cfg = ExperimentConfig.from_dict({
        "study": "real", "pi_grid": [0.5], "trials": 1,
        "methods": ["gnn_skip", "gnn_noskip", "mlp", "multiscale",
                    "tikhonov", "label_prop"],
        "data": {"dataset": "california", "knn_k": 10},
        "model": {"hidden": [16, 16], "width_policy": "fixed"},
        "train": {"epochs": 400, "step_size": 1e-2, "project": False},
        "master_seed": 0, "out_dir": str(tmp_path / "out"), "workers": 0,
    })
    rows = run_study(cfg)
    assert len(rows) == 6
    assert all(r["status"] == "ok" for r in rows), \
        [r["status"] for r in rows]
    paths = emit_outputs(rows, cfg.out_dir, cfg.study)
    results_csv = [p for p in paths if p.endswith("results.csv")][0]
    header = open(results_csv).readline().strip()
    assert header == ("study,topology,n,pi,avg_degree,max_degree,operator,"
                      "method,trial,train_mse,test_mse,m,r,"
                      "laplacian_energy,wall_time_s,status")
    elapsed = time.perf_counter() - started
    assert elapsed < 120.0, f"runtime {elapsed:.0f}s exceeds 2min"
    _report(10, "real-data pipeline",
            f"6 methods trained, outputs conformant, {elapsed:.0f}s")
