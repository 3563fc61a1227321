"""Report emission: JSON, summary tables and per-subject error curves.

Output directory layout::

    report.json            pooled + per-subject reports, tables, run manifests
    table2.txt             summary statistics, NIPST vs NIDL, with percent deltas
    table3.txt             error-bin distribution with per-bin variation
    curves/<subject>.csv   frame_index,t_seconds,truth,nidl,nipst

The text tables are rendered from the JSON content only, so re-rendering a
loaded report reproduces the same bytes.
"""

import csv
import json
import os
from pathlib import Path

from .evaluation import BIN_EDGES, NIDL, NIPST, CrossValResult, bin_labels, percent_delta

SCHEMA = "nidl-report/1"
STAT_ROWS = (
    ("Maximum", "top1"), ("2nd largest", "top2"), ("3rd largest", "top3"),
    ("4th largest", "top4"), ("5th largest", "top5"), ("Minimum", "minimum"),
    ("Mean", "mean"), ("Median", "median"), ("Standard deviation", "stddev"),
)


def stat_block(report):
    """Flatten an ErrorReport (or its dict) into the keys used by the summary table."""
    d = report if isinstance(report, dict) else report.to_dict()
    out = {k: d[k] for k in ("mean", "median", "stddev", "minimum")}
    for i in range(5):
        out[f"top{i + 1}"] = d["top_k"][i] if i < len(d["top_k"]) else None
    return out


def table2_rows(baseline, ours):
    """``[{"stat", "baseline", "ours", "delta_pct"}]``; delta is (ours - baseline) / baseline."""
    rows = []
    for label, key in STAT_ROWS:
        b, o = baseline.get(key), ours.get(key)
        delta = percent_delta(b, o) if b not in (None, 0) and o is not None else None
        rows.append({"stat": label, "baseline": b, "ours": o, "delta_pct": delta})
    return rows


def _num(v, width=10):
    return f"{'n/a':>{width}}" if v is None else f"{v:>{width}.4f}"


def _arrow(delta):
    if delta is None:
        return "n/a"
    if delta < 0:
        return f"↓ {-delta:.2f}%"
    if delta > 0:
        return f"↑ {delta:.2f}%"
    return "0.00%"


def render_table2(rows, baseline_tag=NIPST, ours_tag=NIDL):
    lines = [f"{'Statistic (C)':<20}{baseline_tag:>10}{ours_tag:>10}  Change"]
    for r in rows:
        lines.append(f"{r['stat']:<20}{_num(r['baseline'])}{_num(r['ours'])}  {_arrow(r['delta_pct'])}")
    return "\n".join(lines) + "\n"


def table3_rows(baseline_counts, ours_counts):
    """Per-bin percentages and variation, counts given as ``(bins..., overflow)``."""
    nb, no = sum(baseline_counts), sum(ours_counts)
    labels = bin_labels() + [f">= {BIN_EDGES[-1]}"]
    rows = []
    for label, cb, co in zip(labels, baseline_counts, ours_counts):
        pb, po = 100.0 * cb / nb, 100.0 * co / no
        rows.append({
            "interval": label, "baseline_count": int(cb), "ours_count": int(co),
            "baseline_pct": pb, "ours_pct": po,
            "variation_pct": percent_delta(pb, po) if pb > 0 else None,
        })
    return rows


def render_table3(rows, baseline_tag=NIPST, ours_tag=NIDL):
    lines = [f"{'Error (C)':<14}{baseline_tag + ' %':>12}{ours_tag + ' %':>12}{'Variation':>12}"]
    for r in rows:
        var = "n/a" if r["variation_pct"] is None else f"{r['variation_pct']:.2f}%"
        lines.append(f"{r['interval']:<14}{r['baseline_pct']:>12.4f}{r['ours_pct']:>12.4f}{var:>12}")
    below = rows[:2]
    lines.append(
        f"{'< 0.5':<14}{sum(r['baseline_pct'] for r in below):>12.4f}"
        f"{sum(r['ours_pct'] for r in below):>12.4f}"
    )
    return "\n".join(lines) + "\n"


def build_report(result):
    """The JSON-ready report for a cross-validation result."""
    nidl, nipst = result.pooled(NIDL), result.pooled(NIPST)
    t2 = table2_rows(stat_block(nipst), stat_block(nidl))
    t3 = table3_rows(nipst.bin_counts + [nipst.overflow_count], nidl.bin_counts + [nidl.overflow_count])
    return {
        "schema": SCHEMA,
        "pooled": {NIDL: nidl.to_dict(), NIPST: nipst.to_dict()},
        "constant_predictor_mae": result.pooled_constant_mae(),
        "table2": t2,
        "table3": t3,
        "result": result.to_dict(),
    }


def _atomic_write(path, text):
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    os.replace(tmp, path)


def write_curves(rounds, curve_dir):
    curve_dir.mkdir(parents=True, exist_ok=True)
    for r in rounds:
        c = r["curves"] if isinstance(r, dict) else r.curves
        sid = r["test_subject"] if isinstance(r, dict) else r.test_subject
        path = curve_dir / f"{sid}.csv"
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["frame_index", "t_seconds", "truth", "nidl", "nipst"])
            for row in zip(c["frame_index"], c["t_seconds"], c["truth"], c["nidl"], c["nipst"]):
                w.writerow([row[0]] + [repr(float(v)) for v in row[1:]])


def emit_from_json(report, out):
    """Write every output file from an already-built report dict."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    _atomic_write(out / "report.json", json.dumps(report, indent=1, sort_keys=True) + "\n")
    _atomic_write(out / "table2.txt", render_table2(report["table2"]))
    _atomic_write(out / "table3.txt", render_table3(report["table3"]))
    write_curves(report["result"]["rounds"], out / "curves")


def emit_report(result, out):
    """Write report.json, table2.txt, table3.txt and curves/ for ``result``."""
    report = build_report(result)
    emit_from_json(report, out)
    return report


def load_report(path):
    path = Path(path)
    if path.is_dir():
        path = path / "report.json"
    with open(path, encoding="utf-8") as fh:
        report = json.load(fh)
    return report


def load_result(path):
    return CrossValResult.from_dict(load_report(path)["result"])
