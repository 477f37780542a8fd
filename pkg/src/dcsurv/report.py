"""Writers for report tables, curves and figures."""

from __future__ import annotations

import csv
import json
from pathlib import Path

from .pipeline import METRICS, ReportTable

HEADERS = {
    "sample_size": "Sample size after matching",
    "masmd": "MASMD",
    "inconsistency": "Inconsistency",
    "gap_treated": "Gap (treated)",
    "gap_control": "Gap (control)",
}


def _g(x) -> str:
    return format(float(x), ".17g")


def write_curves(curves, path) -> None:
    """Kaplan-Meier curves as ``group,time,survival,at_risk,events`` rows."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["group", "time", "survival", "at_risk", "events"])
        for c in curves:
            for t, s, n, d in zip(c.times, c.survival, c.at_risk, c.events):
                w.writerow([c.group, _g(t), _g(s), int(n), int(d)])


def format_table(table: ReportTable) -> str:
    cols = ["Method"] + [HEADERS[m] for m in METRICS]
    body = []
    for r in table.rows:
        cells = [r["method"]]
        for m in METRICS:
            fmt = "{:.2f} ({:.2f})" if m == "sample_size" else "{:.4f} ({:.4f})"
            cells.append(fmt.format(r[f"{m}_mean"], r[f"{m}_sd"]))
        body.append(cells)
    widths = [max(len(x) for x in col) for col in zip(cols, *body)]
    line = lambda cells: "  ".join(c.ljust(w) for c, w in zip(cells, widths)).rstrip()
    out = [line(cols), line(["-" * w for w in widths])] + [line(b) for b in body]
    out.append("")
    out.append(f"B = {table.repetitions}, failed repetitions = {table.failures}, "
               f"config {table.digest}")
    return "\n".join(out) + "\n"


def write_report(table: ReportTable, out_dir, figures: bool = True) -> list:
    """Write ``report.csv``, ``report.txt``, ``report.json``, ``mean_curves.csv``
    and (optionally) ``figures/mean_curves.png``. Returns the written paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    path = out / "report.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        keys = ["method", "repetitions"] + [f"{m}_{s}" for m in METRICS for s in ("mean", "sd")]
        w.writerow(keys)
        for r in table.rows:
            w.writerow([r["method"], r["repetitions"]] + [_g(r[k]) for k in keys[2:]])
    written.append(path)

    path = out / "report.txt"
    path.write_text(format_table(table))
    written.append(path)

    path = out / "report.json"
    path.write_text(json.dumps({"meta": table.meta, "rows": table.rows}, indent=2,
                               sort_keys=True) + "\n")
    written.append(path)

    path = out / "mean_curves.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "group", "time", "survival"])
        for name, (tr, co) in table.curves.items():
            for group, vals in (("treated", tr), ("control", co)):
                for t, s in zip(table.grid, vals):
                    w.writerow([name, group, _g(t), _g(s)])
    written.append(path)

    if figures and table.curves:
        from .plotting import plot_mean_curves
        fig_dir = out / "figures"
        fig_dir.mkdir(exist_ok=True)
        path = fig_dir / "mean_curves.png"
        plot_mean_curves(table.grid, table.curves, path, table.meta.get("name", ""))
        written.append(path)
    return written

