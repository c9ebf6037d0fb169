"""Report emission: CSV tables, a JSON tree and SVG trace plots."""
from __future__ import annotations

import csv
import io
import json
from pathlib import Path

import numpy as np

from ..logs import dump_json
from .metrics import METRIC_NAMES

CSV_HEADER = ("controller", "scenario", "zone", "seed", "metric", "value")
FORMATS = ("csv", "json", "svg")


def _num(x):
    return repr(float(x))


def summary_rows(report):
    """One row per (cell, metric) holding the mean over seeds."""
    rows = []
    for cell in report.sorted_cells():
        for m in METRIC_NAMES:
            value = "failed" if cell.failed else _num(cell.mean(m))
            rows.append((cell.controller, cell.scenario, cell.zone, "mean", m, value))
    return rows


def trial_rows(report):
    rows = []
    for cell in report.sorted_cells():
        for s in sorted(cell.trials):
            t = cell.trials[s]
            for m in METRIC_NAMES:
                rows.append((cell.controller, cell.scenario, cell.zone, str(s), m, _num(getattr(t, m))))
    return rows


def _csv_text(rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    w.writerows(rows)
    return buf.getvalue()


def report_tree(report):
    cells = []
    for cell in report.sorted_cells():
        metrics = {}
        for m in METRIC_NAMES:
            vals = cell.values(m)
            metrics[m] = {"mean": None if cell.failed else cell.mean(m),
                          "std": None if cell.failed or len(vals) < 2 else cell.std(m),
                          "values": [float(v) for v in vals]}
        cells.append({"controller": cell.controller, "scenario": cell.scenario, "zone": cell.zone,
                      "failed": cell.failed, "reason": cell.reason, "seeds": sorted(cell.trials),
                      "metrics": metrics})
    traces = [dict(controller=k[0], scenario=k[1], zone=k[2], **tr) for k, tr in sorted(report.traces.items())]
    return {"matrix": report.matrix, "n": report.n, "seeds": list(report.seeds), "gamma": report.gamma,
            "cells": cells, "traces": traces}


_COLORS = {"openloop": "#7f7f7f", "pd": "#1f77b4", "dfpc": "#d62728"}


def _polyline(xs, ys, x0, y0, w, h, xr, yr, color):
    pts = []
    for x, y in zip(xs, ys):
        if y is None or not np.isfinite(y):
            continue
        px = x0 + (x - xr[0]) / max(xr[1] - xr[0], 1e-12) * w
        py = y0 + h - (y - yr[0]) / max(yr[1] - yr[0], 1e-12) * h
        pts.append(f"{px:.2f},{py:.2f}")
    if not pts:
        return ""
    return f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{" ".join(pts)}"/>'


def trace_svg(traces_by_controller, title):
    """Two stacked panels: stem location and residual action against time."""
    W, H, pad = 640, 420, 50
    ph = (H - 3 * pad) / 2
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="11">',
             f'<text x="{W / 2}" y="18" text-anchor="middle" font-size="13">{title}</text>']
    all_t = [t for tr in traces_by_controller.values() for t in tr["t"]]
    xr = (min(all_t), max(all_t)) if all_t else (0.0, 1.0)
    panels = (("u_true", "stem location u", (0.0, 1.0)), ("a_res", "residual action (rad/s)", None))
    for i, (key, label, yr) in enumerate(panels):
        y0 = pad + i * (ph + pad)
        if yr is None:
            vals = [abs(v) for tr in traces_by_controller.values() for v in tr[key] if v is not None and np.isfinite(v)]
            lim = max(vals) if vals and max(vals) > 0 else 1.0
            yr = (-lim, lim)
        parts.append(f'<rect x="{pad}" y="{y0:.1f}" width="{W - 2 * pad}" height="{ph:.1f}" fill="none" stroke="#000"/>')
        parts.append(f'<text x="{pad}" y="{y0 - 4:.1f}">{label}</text>')
        parts.append(f'<text x="{pad - 4}" y="{y0 + 10:.1f}" text-anchor="end">{yr[1]:.2g}</text>')
        parts.append(f'<text x="{pad - 4}" y="{y0 + ph:.1f}" text-anchor="end">{yr[0]:.2g}</text>')
        for name in sorted(traces_by_controller):
            tr = traces_by_controller[name]
            parts.append(_polyline(tr["t"], tr[key], pad, y0, W - 2 * pad, ph, xr, yr, _COLORS.get(name, "#000")))
    parts.append(f'<text x="{W / 2}" y="{H - 10}" text-anchor="middle">time (s)</text>')
    for j, name in enumerate(sorted(traces_by_controller)):
        parts.append(f'<text x="{W - pad - 80}" y="{pad + 14 * (j + 1)}" fill="{_COLORS.get(name, "#000")}">{name}</text>')
    parts.append("</svg>")
    return "\n".join(p for p in parts if p) + "\n"


def write_trace_svgs(traces, out_dir, stem):
    """One SVG per (scenario, zone) overlaying every controller's representative trial."""
    groups = {}
    for (controller, scenario, zone), tr in traces.items():
        groups.setdefault((scenario, zone), {})[controller] = tr
    written = []
    for (scenario, zone), trs in sorted(groups.items()):
        p = Path(out_dir) / f"{stem}_{scenario}_{zone}.svg"
        p.write_text(trace_svg(trs, f"{scenario} {zone}"))
        written.append(p)
    return written


def traces_from_json(tree):
    return {(t["controller"], t["scenario"], t["zone"]): {k: t[k] for k in ("t", "u_true", "a_res")}
            for t in tree.get("traces", [])}


def emit_report(report, formats, out_dir):
    """Write the requested formats under ``out_dir``; returns the written paths."""
    formats = set(formats)
    unknown = formats - set(FORMATS)
    if unknown:
        raise ValueError(f"unknown report formats: {sorted(unknown)}")
    if not formats:
        return []
    out = Path(out_dir)
    written = []
    try:
        out.mkdir(parents=True, exist_ok=True)
        stem = report.matrix
        if "csv" in formats:
            p = out / f"{stem}.csv"
            p.write_text(_csv_text(summary_rows(report)))
            q = out / f"{stem}_trials.csv"
            q.write_text(_csv_text(trial_rows(report)))
            written += [p, q]
        if "json" in formats:
            p = out / f"{stem}.json"
            p.write_text(json.dumps(report_tree(report), sort_keys=True, indent=1) + "\n")
            written.append(p)
        if "svg" in formats:
            written += write_trace_svgs(report.traces, out, stem)
    except OSError as exc:
        raise OSError(f"cannot write report to {out}: {exc.strerror or exc}") from exc
    return written


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
