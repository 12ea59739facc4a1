"""Command-line entry point.

Subcommands
-----------
gen          write a synthetic dataset bundle from a data config
train        fit one method on a bundle; writes checkpoint + loss trace
convergence  run the convergence (or label-fraction) study
topology     run the topology-sensitivity study
degree       run the degree-sensitivity study
real         run the real-data benchmark
theory       print theory quantities for a graph, or verify the operator
             mismatch bound on a dataset bundle

All subcommands take ``--config FILE`` (JSON or YAML), and experiment
subcommands accept ``--out``, ``--seed``, and ``--workers`` overrides.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np
import yaml

from .datagen import TopologySpec, export_bundle, gen_topology, load_bundle, \
    make_synthetic
from .emit import emit_outputs
from .experiments import ExperimentConfig, make_estimator, run_study
from .nets import save_params
from .operators import (
    OPERATOR_KINDS,
    FilterCoefficients,
    propagation_operator,
    row_sum_norm,
)
from .theory import (
    SmoothnessSpec,
    dependency_partition,
    entropy_bound,
    kappa_n,
    predicted_rate,
    rate_exponent,
    receptive_field_bound,
    verify_mismatch,
)


def load_config(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        if str(path).endswith((".yaml", ".yml")):
            doc = yaml.safe_load(fh)
        else:
            doc = json.load(fh)
    if not isinstance(doc, dict):
        raise ValueError(f"{path}: config must be a mapping")
    return doc


def _cmd_gen(args) -> int:
    doc = load_config(args.config) if args.config else {}
    data = doc.get("data", doc)
    seed = args.seed if args.seed is not None else int(data.get("seed", 0))
    spec = TopologySpec(data.get("topology", "ring"), int(data.get("n", 200)),
                        float(data.get("avg_degree", 2.0)), 0)
    ds = make_synthetic(
        spec, d=int(data.get("d", 1)), k=int(data.get("k", 2)),
        target_kind=data.get("target_kind", "brownian"),
        op_kind=data.get("op_kind", "neigh_avg"),
        pi=float(data.get("pi", 0.9)),
        noise_sigma=float(data.get("noise_sigma", 1.0)), seed=seed,
        scale=float(data.get("scale", 1.0)),
        dnn_depth=int(data.get("dnn_depth", 2)),
        dnn_width=int(data.get("dnn_width", 32)))
    out = args.out or "bundle"
    export_bundle(ds, out)
    print(f"wrote bundle with n={ds.n}, d={ds.d} to {out}")
    return 0


def _cmd_train(args) -> int:
    doc = load_config(args.config) if args.config else {}
    ds = load_bundle(args.bundle)
    cfg = ExperimentConfig.from_dict({
        "study": "convergence",
        "methods": [doc.get("method", "gnn_skip")],
        "model": doc.get("model", {}),
        "train": doc.get("train", {}),
        "out_dir": args.out or "out",
    })
    method = cfg.methods[0]
    seed = args.seed if args.seed is not None else cfg.train.seed
    est = make_estimator(method, ds.graph, ds.op.kind, cfg.model, cfg.train,
                         seed, ds.n)
    y_obs = np.where(ds.mask.omega, ds.y, np.nan)
    est.fit(ds.X, y_obs, mask=ds.mask)
    os.makedirs(cfg.out_dir, exist_ok=True)
    trace = getattr(est, "loss_trace_", None)
    if trace is not None:
        trace_path = os.path.join(cfg.out_dir, "loss_trace.csv")
        with open(trace_path, "w", encoding="utf-8") as fh:
            fh.write("epoch,loss\n")
            for i, v in enumerate(trace):
                fh.write(f"{i},{repr(float(v))}\n")
        print(f"wrote {trace_path}")
    params = getattr(est, "params_", None)
    if params is not None:
        ckpt = os.path.join(cfg.out_dir, "checkpoint.npz")
        save_params(ckpt, params)
        print(f"wrote {ckpt}")
    else:
        values = est.predict()
        path = os.path.join(cfg.out_dir, "node_values.csv")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("node,value\n")
            for i, v in enumerate(values):
                fh.write(f"{i},{repr(float(v))}\n")
        print(f"wrote {path}")
    print(f"train mse: {est.train_mse_:.6g}")
    return 0


def _run_study_command(args, expected_studies, default_study) -> int:
    doc = load_config(args.config) if args.config else {}
    doc.setdefault("study", default_study)
    if doc["study"] not in expected_studies:
        raise ValueError(
            f"config study {doc['study']!r} does not match subcommand")
    if args.out:
        doc["out_dir"] = args.out
    if args.seed is not None:
        doc["master_seed"] = args.seed
    if args.workers is not None:
        doc["workers"] = args.workers
    cfg = ExperimentConfig.from_dict(doc)

    def progress(done, total):
        print(f"\r{cfg.study}: {done}/{total} cells", end="", flush=True)

    rows = run_study(cfg, progress=progress)
    print()
    paths = emit_outputs(rows, cfg.out_dir, cfg.study)
    for p in paths:
        print(f"wrote {p}")
    n_err = sum(1 for r in rows if r["status"] != "ok")
    if n_err:
        print(f"{n_err}/{len(rows)} rows carry an error marker", file=sys.stderr)
    return 0


def _theory_table(doc: dict) -> list:
    gspec = doc.get("graph", {})
    spec = TopologySpec(gspec.get("topology", "ring"), int(gspec.get("n", 30)),
                        float(gspec.get("avg_degree", 2.0)),
                        int(gspec.get("seed", 0)))
    base = gen_topology(spec)
    graph = base.with_self_loops() if gspec.get("self_loops", True) else base
    op_kind = doc.get("op_kind", "neigh_avg")
    op = propagation_operator(graph, op_kind)
    L1 = int(doc.get("conv_depth", 2))
    L2 = int(doc.get("mlp_depth", 2))
    widths = doc.get("widths") or [int(doc.get("d", 1))] + [32] * L2 + [1]
    s = int(doc.get("sparsity", sum(
        widths[i] * widths[i + 1] + widths[i + 1]
        for i in range(len(widths) - 1))))
    delta = float(doc.get("delta", 1.0 / graph.n))
    delta = min(max(delta, 1e-12), 1.0)
    pi = float(doc.get("pi", 0.9))
    part = dependency_partition(op, L1)
    t_norm = row_sum_norm(op)
    d = int(doc.get("d", 1))
    rows = [
        ("n", graph.n),
        ("operator", op_kind),
        ("row_sum_norm", t_norm),
        ("conv_depth", L1),
        ("m_exact", part.m),
        ("m_power_bound", receptive_field_bound(op, L1)),
        ("dep_degree_max", part.dep_degree_max),
        ("r", part.r),
        ("r_bound", part.m * (part.m - 1) + 1),
        ("entropy_bound", entropy_bound(delta, d, L1, L2, widths, s, t_norm)),
        ("kappa_n", kappa_n(graph.n, d, L1, L2, max(s, 2), t_norm)),
    ]
    sm = doc.get("smoothness")
    if sm:
        spec_s = SmoothnessSpec(int(sm["q"]), tuple(sm["d_vec"]),
                                tuple(sm["t_vec"]), tuple(sm["alpha_vec"]))
        rows.append(("rate_exponent", rate_exponent(spec_s)))
        rows.append(("predicted_rate",
                     predicted_rate(spec_s, graph.n, part.m, pi)))
    return rows


def _theory_mismatch_rows(bundle_dir) -> list:
    ds = load_bundle(bundle_dir)
    theta = np.array(ds.meta["theta"])
    coeffs = FilterCoefficients(theta, beta=1.0)
    rows = []
    for kind in OPERATOR_KINDS:
        if kind == ds.op.kind:
            continue
        other = propagation_operator(ds.graph, kind)
        lhs, rhs, holds = verify_mismatch(ds.op, other, coeffs, ds.X)
        rows.append({"t_kind": ds.op.kind, "s_kind": kind, "lhs": lhs,
                     "rhs": rhs, "margin": rhs - lhs, "holds": holds})
    return rows


def _cmd_theory(args) -> int:
    if args.bundle:
        rows = _theory_mismatch_rows(args.bundle)
        print(f"{'T':>10} {'S':>10} {'lhs':>12} {'rhs':>12} {'margin':>12} ok")
        for r in rows:
            print(f"{r['t_kind']:>10} {r['s_kind']:>10} {r['lhs']:>12.6g} "
                  f"{r['rhs']:>12.6g} {r['margin']:>12.6g} {r['holds']}")
        if args.out:
            os.makedirs(args.out, exist_ok=True)
            path = os.path.join(args.out, "mismatch.csv")
            with open(path, "w", encoding="utf-8") as fh:
                fh.write("t_kind,s_kind,lhs,rhs,margin,holds\n")
                for r in rows:
                    fh.write(f"{r['t_kind']},{r['s_kind']},{repr(r['lhs'])},"
                             f"{repr(r['rhs'])},{repr(r['margin'])},"
                             f"{int(r['holds'])}\n")
            print(f"wrote {path}")
        return 0 if all(r["holds"] for r in rows) else 1

    doc = load_config(args.config) if args.config else {}
    rows = _theory_table(doc)
    width = max(len(name) for name, _ in rows)
    for name, value in rows:
        if isinstance(value, float):
            print(f"{name:<{width}}  {value:.6g}")
        else:
            print(f"{name:<{width}}  {value}")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        path = os.path.join(args.out, "theory.csv")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("quantity,value\n")
            for name, value in rows:
                v = repr(float(value)) if isinstance(value, float) else value
                fh.write(f"{name},{v}\n")
        print(f"wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gnnreg",
        description="Semi-supervised node regression laboratory")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, bundle=False):
        p.add_argument("--config", type=str, default=None,
                       help="JSON or YAML config file")
        p.add_argument("--out", type=str, default=None, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="master seed")
        p.add_argument("--workers", type=int, default=None,
                       help="parallel worker processes (0 = all cores)")
        if bundle:
            p.add_argument("--bundle", type=str, default=None,
                           help="dataset bundle directory")

    common(sub.add_parser("gen", help="write a synthetic dataset bundle"))
    common(sub.add_parser("train", help="single fit from a bundle"),
           bundle=True)
    for name in ("convergence", "topology", "degree", "real"):
        common(sub.add_parser(name, help=f"run the {name} study"))
    common(sub.add_parser("theory", help="theory quantities / mismatch check"),
           bundle=True)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "gen":
        return _cmd_gen(args)
    if args.command == "train":
        if not args.bundle:
            print("train requires --bundle", file=sys.stderr)
            return 2
        return _cmd_train(args)
    if args.command == "convergence":
        return _run_study_command(args, ("convergence", "label_fraction"),
                                  "convergence")
    if args.command == "topology":
        return _run_study_command(args, ("topology",), "topology")
    if args.command == "degree":
        return _run_study_command(args, ("degree",), "degree")
    if args.command == "real":
        return _run_study_command(args, ("real",), "real")
    if args.command == "theory":
        return _cmd_theory(args)
    raise AssertionError(args.command)


if __name__ == "__main__":
    sys.exit(main())
