"""Deterministic CSV and SVG emission for experiment tables.

File contents are a pure function of the input table: floats are written
with shortest round-trip ``repr`` in CSVs and fixed precision in SVGs, and
all orderings are canonical.
"""

from __future__ import annotations

import csv
import math
import os
from collections import OrderedDict

from .experiments import RESULT_COLUMNS, fit_slope



SUMMARY_COLUMNS = ("study", "topology", "n", "pi", "avg_degree", "operator",
                   "method", "kind", "mean_train_mse", "mean_test_mse",
                   "n_trials", "slope", "intercept", "r_squared", "n_points")


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_results_csv(rows: list, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RESULT_COLUMNS)
        for row in rows:
            writer.writerow([_fmt(row[c]) for c in RESULT_COLUMNS])


def read_results_csv(path) -> list:
    """Load a results table back into typed row dicts."""
    types = {"n": int, "max_degree": int, "trial": int, "m": int, "r": int,
             "pi": float, "avg_degree": float, "train_mse": float,
             "test_mse": float, "laplacian_energy": float,
             "wall_time_s": float}
    rows = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != RESULT_COLUMNS:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        for rec in reader:
            rows.append({k: (types[k](v) if k in types else v)
                         for k, v in rec.items()})
    return rows


def _ok(row) -> bool:
    return row["status"] == "ok" and math.isfinite(row["test_mse"])


def aggregate_rows(rows: list) -> "OrderedDict":
    """Mean MSEs per (factors, method) over ok trials, insertion-ordered by
    the canonical row order."""
    groups = OrderedDict()
    for row in rows:
        key = (row["study"], row["topology"], row["n"], row["pi"],
               row["avg_degree"], row["operator"], row["method"])
        groups.setdefault(key, []).append(row)
    out = OrderedDict()
    for key, members in groups.items():
        ok = [r for r in members if _ok(r)]
        out[key] = {
            "n_trials": len(ok),
            "mean_train_mse": (sum(r["train_mse"] for r in ok) / len(ok)
                               if ok else float("nan")),
            "mean_test_mse": (sum(r["test_mse"] for r in ok) / len(ok)
                              if ok else float("nan")),
        }
    return out


def slope_summaries(rows: list, study: str) -> list:
    """Log-log slope fits of aggregate test MSE.

    For convergence studies the fit runs over the n grid per (pi, method);
    for label-fraction studies over 1/pi per (n, method).  Groups with
    fewer than two usable points are skipped.
    """
    if study not in ("convergence", "label_fraction"):
        return []
    agg = aggregate_rows(rows)
    series = {}
    for (sname, topo, n, pi, deg, op, method), stats in agg.items():
        if not math.isfinite(stats["mean_test_mse"]):
            continue
        if study == "convergence":
            gkey = (sname, topo, pi, deg, op, method)
            x = float(n)
        else:
            gkey = (sname, topo, n, deg, op, method)
            x = 1.0 / float(pi)
        series.setdefault(gkey, []).append((x, stats["mean_test_mse"]))
    out = []
    for gkey, points in series.items():
        xs = [p[0] for p in points]
        ys = [p[1] for p in points]
        if len(set(xs)) < 2 or any(y <= 0 for y in ys):
            continue
        fit = fit_slope(xs, ys)
        out.append((gkey, fit))
    return out


def write_summary_csv(rows: list, study: str, path) -> None:
    agg = aggregate_rows(rows)
    slopes = slope_summaries(rows, study)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SUMMARY_COLUMNS)
        for (sname, topo, n, pi, deg, op, method), stats in agg.items():
            writer.writerow([sname, topo, n, _fmt(pi), _fmt(deg), op, method,
                             "aggregate", _fmt(stats["mean_train_mse"]),
                             _fmt(stats["mean_test_mse"]), stats["n_trials"],
                             "", "", "", ""])
        for gkey, fit in slopes:
            if study == "convergence":
                sname, topo, pi, deg, op, method = gkey
                n_field = ""
                pi_field = _fmt(pi)
            else:
                sname, topo, n, deg, op, method = gkey
                n_field = str(n)
                pi_field = ""
            writer.writerow([sname, topo, n_field, pi_field, _fmt(deg), op,
                             method, "slope", "", "", "", _fmt(fit.slope),
                             _fmt(fit.intercept), _fmt(fit.r_squared),
                             fit.n_points])


# ---------------------------------------------------------------------------
# SVG


_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
            "#17becf", "#e377c2")
_W, _H = 640, 440
_ML, _MR, _MT, _MB = 70, 20, 30, 50


def _svg_coords(xs, ys, x_range, y_range):
    x0, x1 = x_range
    y0, y1 = y_range
    span_x = (x1 - x0) or 1.0
    span_y = (y1 - y0) or 1.0
    pts = []
    for x, y in zip(xs, ys):
        px = _ML + (x - x0) / span_x * (_W - _ML - _MR)
        py = _H - _MB - (y - y0) / span_y * (_H - _MT - _MB)
        pts.append(f"{px:.2f},{py:.2f}")
    return " ".join(pts)


def _log_ticks(lo, hi):
    ticks = []
    k = math.floor(math.log10(lo)) if lo > 0 else 0
    while 10.0**k <= hi * 1.0001:
        if 10.0**k >= lo * 0.9999:
            ticks.append(10.0**k)
        k += 1
    return ticks or [lo, hi]


def render_loglog_svg(series: dict, x_label: str, y_label: str, title: str,
                      reference_slope: float | None = None) -> str:
    """Self-contained log-log chart; one polyline per series.

    ``series`` maps a label to (xs, ys) with positive entries.  When
    ``reference_slope`` is given, a dashed guide line with that log-log
    slope is anchored at the first series' first point.
    """
    finite = [(x, y) for xs, ys in series.values() for x, y in zip(xs, ys)
              if x > 0 and y > 0 and math.isfinite(y)]
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" '
             f'height="{_H}" viewBox="0 0 {_W} {_H}">',
             f'<rect width="{_W}" height="{_H}" fill="white"/>',
             f'<text x="{_W/2:.0f}" y="18" text-anchor="middle" '
             f'font-size="14">{title}</text>']
    if not finite:
        parts.append('<text x="320" y="220" text-anchor="middle" '
                     'font-size="12">no finite data</text></svg>')
        return "\n".join(parts)
    lx = [math.log10(x) for x, _ in finite]
    ly = [math.log10(y) for _, y in finite]
    x_range = (min(lx) - 0.05, max(lx) + 0.05)
    y_range = (min(ly) - 0.1, max(ly) + 0.1)

    # axes
    parts.append(f'<line x1="{_ML}" y1="{_H - _MB}" x2="{_W - _MR}" '
                 f'y2="{_H - _MB}" stroke="black"/>')
    parts.append(f'<line x1="{_ML}" y1="{_MT}" x2="{_ML}" y2="{_H - _MB}" '
                 f'stroke="black"/>')
    for t in _log_ticks(10 ** x_range[0], 10 ** x_range[1]):
        px = _svg_coords([math.log10(t)], [y_range[0]], x_range, y_range)
        x_pix = float(px.split(",")[0])
        parts.append(f'<line x1="{x_pix:.2f}" y1="{_H - _MB}" '
                     f'x2="{x_pix:.2f}" y2="{_H - _MB + 5}" stroke="black"/>')
        parts.append(f'<text x="{x_pix:.2f}" y="{_H - _MB + 18}" '
                     f'text-anchor="middle" font-size="10">{t:g}</text>')
    for t in _log_ticks(10 ** y_range[0], 10 ** y_range[1]):
        py = _svg_coords([x_range[0]], [math.log10(t)], x_range, y_range)
        y_pix = float(py.split(",")[1])
        parts.append(f'<line x1="{_ML - 5}" y1="{y_pix:.2f}" x2="{_ML}" '
                     f'y2="{y_pix:.2f}" stroke="black"/>')
        parts.append(f'<text x="{_ML - 8}" y="{y_pix + 3:.2f}" '
                     f'text-anchor="end" font-size="10">{t:g}</text>')
    parts.append(f'<text x="{(_ML + _W - _MR) / 2:.0f}" y="{_H - 12}" '
                 f'text-anchor="middle" font-size="12">{x_label}</text>')
    parts.append(f'<text x="16" y="{(_MT + _H - _MB) / 2:.0f}" '
                 f'text-anchor="middle" font-size="12" transform="rotate(-90 '
                 f'16 {(_MT + _H - _MB) / 2:.0f})">{y_label}</text>')

    legend_y = _MT + 8
    for i, (label, (xs, ys)) in enumerate(series.items()):
        keep = [(x, y) for x, y in zip(xs, ys)
                if x > 0 and y > 0 and math.isfinite(y)]
        if not keep:
            continue
        keep.sort()
        color = _PALETTE[i % len(_PALETTE)]
        pts = _svg_coords([math.log10(x) for x, _ in keep],
                          [math.log10(y) for _, y in keep], x_range, y_range)
        parts.append(f'<polyline fill="none" stroke="{color}" '
                     f'stroke-width="1.5" points="{pts}"/>')
        parts.append(f'<rect x="{_W - _MR - 150}" y="{legend_y - 8}" '
                     f'width="10" height="10" fill="{color}"/>')
        parts.append(f'<text x="{_W - _MR - 136}" y="{legend_y + 1}" '
                     f'font-size="11">{label}</text>')
        legend_y += 16

    if reference_slope is not None:
        first = next(iter(series.values()))
        keep = [(x, y) for x, y in zip(*first)
                if x > 0 and y > 0 and math.isfinite(y)]
        if keep:
            keep.sort()
            x_a, y_a = keep[0]
            lx0, ly0 = math.log10(x_a), math.log10(y_a)
            lx1 = x_range[1] - 0.05
            ly1 = ly0 + reference_slope * (lx1 - lx0)
            pts = _svg_coords([lx0, lx1], [ly0, ly1], x_range, y_range)
            parts.append(f'<polyline fill="none" stroke="#666666" '
                         f'stroke-width="1" stroke-dasharray="5,4" '
                         f'points="{pts}"/>')
            parts.append(f'<text x="{_W - _MR - 150}" y="{legend_y + 1}" '
                         f'font-size="11" fill="#666666">reference slope '
                         f'{reference_slope:g}</text>')
    parts.append("</svg>")
    return "\n".join(parts)


def _panel_series(rows: list, study: str) -> dict:
    """Group aggregate points into panels: {panel_name: {label: (xs, ys)}}."""
    agg = aggregate_rows(rows)
    panels = {}
    for (sname, topo, n, pi, deg, op, method), stats in agg.items():
        y = stats["mean_test_mse"]
        if study in ("convergence", "label_fraction"):
            panel = topo
            label = f"{method} pi={pi:g}"
            x = float(n) if study == "convergence" else 1.0 / float(pi)
        elif study == "topology":
            panel = topo
            label = method
            x = float(pi)
        elif study == "degree":
            panel = op
            label = f"{method} deg={deg:g}"
            x = None  # filled from max-degree buckets below
        else:
            panel = topo
            label = method
            x = float(pi)
        if study == "degree":
            continue
        panels.setdefault(panel, {}).setdefault(label, ([], []))
        xs, ys = panels[panel][label]
        xs.append(x)
        ys.append(y)
    if study == "degree":
        groups = {}
        for row in rows:
            if not _ok(row):
                continue
            key = (row["operator"], f"{row['method']} deg={row['avg_degree']:g}")
            groups.setdefault(key, {}).setdefault(row["max_degree"], []).append(
                row["test_mse"])
        for (op, label), buckets in sorted(groups.items()):
            xs = sorted(buckets)
            ys = [sum(buckets[x]) / len(buckets[x]) for x in xs]
            panels.setdefault(op, {})[label] = ([float(x) for x in xs], ys)
    return panels


def emit_outputs(rows: list, out_dir, study: str | None = None) -> list:
    """Write results.csv, summary.csv, and one SVG per study panel.

    Returns the list of written paths.  Raises on an empty table.
    """
    if not rows:
        raise ValueError("cannot emit an empty result table")
    study = study or rows[0]["study"]
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    results_path = os.path.join(out_dir, "results.csv")
    write_results_csv(rows, results_path)
    paths.append(results_path)
    summary_path = os.path.join(out_dir, "summary.csv")
    write_summary_csv(rows, study, summary_path)
    paths.append(summary_path)

    x_labels = {"convergence": "n", "label_fraction": "1/pi",
                "topology": "pi", "degree": "max degree", "real": "pi"}
    reference = -0.5 if study == "convergence" else None
    for panel, series in sorted(_panel_series(rows, study).items()):
        svg = render_loglog_svg(
            series, x_labels.get(study, "x"), "test MSE",
            f"{study}: {panel}", reference_slope=reference)
        path = os.path.join(out_dir, f"{study}_{panel}.svg")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(svg + "\n")
        paths.append(path)
    return paths
