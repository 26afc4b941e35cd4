"""Cross-run result tables and SVG line charts.

Reads the `report.csv` of one or more completed runs and emits, per
metric, a CSV table (rows = selection ratios, columns = methods) and a
simple self-contained SVG chart of metric versus ratio.  The chart embeds
its own data table in a comment so the file stays diffable.
"""

from __future__ import annotations

import csv
import io
from pathlib import Path

from .errors import MissingRun
from .evaluation import METRICS

_PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"]


def read_report_rows(run_dir: str | Path) -> list[dict]:
    path = Path(run_dir) / "report.csv"
    if not path.is_file():
        raise MissingRun(f"{run_dir} has no report.csv")
    with path.open("r", encoding="utf-8", newline="") as fh:
        return [
            {
                "method": row["method"],
                "ratio": float(row["ratio"]),
                "metric": row["metric"],
                "mean": float(row["mean"]),
                "std": float(row["std"]),
            }
            for row in csv.DictReader(fh)
        ]


def collect_runs(run_dirs: list[str | Path]) -> dict[str, dict[float, dict[str, float]]]:
    """{column label: {ratio: {metric: mean}}} across all given runs."""
    if not run_dirs:
        raise MissingRun("no run directories given")
    qualify = len(run_dirs) > 1
    columns: dict[str, dict[float, dict[str, float]]] = {}
    for run_dir in run_dirs:
        label_prefix = f"{Path(run_dir).name}:" if qualify else ""
        for row in read_report_rows(run_dir):
            label = label_prefix + row["method"]
            columns.setdefault(label, {}).setdefault(row["ratio"], {})[row["metric"]] = row[
                "mean"
            ]
    return columns


def metric_table_csv(columns: dict, metric: str) -> str:
    ratios = sorted({r for per_ratio in columns.values() for r in per_ratio})
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["ratio"] + list(columns))
    for ratio in ratios:
        row = [repr(ratio)]
        for label in columns:
            value = columns[label].get(ratio, {}).get(metric)
            row.append("" if value is None else repr(value))
        writer.writerow(row)
    return buf.getvalue()


def metric_chart_svg(columns: dict, metric: str, width: int = 640, height: int = 400) -> str:
    ratios = sorted({r for per_ratio in columns.values() for r in per_ratio})
    series: dict[str, list[tuple[float, float]]] = {}
    for label, per_ratio in columns.items():
        points = [
            (r, per_ratio[r][metric]) for r in ratios if metric in per_ratio.get(r, {})
        ]
        if points:
            series[label] = points
    values = [v for pts in series.values() for _, v in pts]
    lo, hi = (min(values), max(values)) if values else (0.0, 1.0)
    if hi - lo < 1e-9:
        lo, hi = lo - 0.05, hi + 0.05
    pad = 0.08 * (hi - lo)
    lo, hi = lo - pad, hi + pad
    margin_l, margin_r, margin_t, margin_b = 60, 160, 30, 45
    plot_w = width - margin_l - margin_r
    plot_h = height - margin_t - margin_b
    x0, x1 = min(ratios), max(ratios)

    def sx(r):
        return margin_l + (r - x0) / max(x1 - x0, 1e-12) * plot_w

    def sy(v):
        return margin_t + (hi - v) / (hi - lo) * plot_h

    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        "<!-- data",
        "metric,ratio,column,mean",
    ]
    for label, points in series.items():
        for r, v in points:
            lines.append(f"{metric},{r!r},{label},{v!r}")
    lines.append("-->")
    lines.append(
        f'<rect x="{margin_l}" y="{margin_t}" width="{plot_w}" height="{plot_h}" '
        'fill="none" stroke="#999"/>'
    )
    for r in ratios:
        x = sx(r)
        lines.append(
            f'<text x="{x:.1f}" y="{height - margin_b + 18}" font-size="11" '
            f'text-anchor="middle">{int(round(r * 100))}%</text>'
        )
    for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
        v = lo + frac * (hi - lo)
        lines.append(
            f'<text x="{margin_l - 6}" y="{sy(v):.1f}" font-size="11" '
            f'text-anchor="end">{v:.3f}</text>'
        )
    for idx, (label, points) in enumerate(series.items()):
        color = _PALETTE[idx % len(_PALETTE)]
        path = " ".join(f"{sx(r):.1f},{sy(v):.1f}" for r, v in points)
        lines.append(
            f'<polyline points="{path}" fill="none" stroke="{color}" stroke-width="1.5"/>'
        )
        ly = margin_t + 14 + 16 * idx
        lx = width - margin_r + 10
        lines.append(
            f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 18}" y2="{ly - 4}" '
            f'stroke="{color}" stroke-width="1.5"/>'
        )
        lines.append(f'<text x="{lx + 22}" y="{ly}" font-size="11">{label}</text>')
    lines.append(
        f'<text x="{margin_l + plot_w / 2:.1f}" y="{height - 8}" font-size="12" '
        'text-anchor="middle">selection ratio</text>'
    )
    lines.append(
        f'<text x="{margin_l + plot_w / 2:.1f}" y="{margin_t - 10}" font-size="12" '
        f'text-anchor="middle">{metric.upper()} vs selection ratio</text>'
    )
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def write_report(run_dirs: list[str | Path], out_dir: str | Path) -> list[Path]:
    """Emit per-metric CSV tables and SVG charts for the given runs."""
    columns = collect_runs(run_dirs)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for metric in METRICS:
        csv_path = out_dir / f"{metric}.csv"
        csv_path.write_text(metric_table_csv(columns, metric), encoding="utf-8")
        svg_path = out_dir / f"{metric}.svg"
        svg_path.write_text(metric_chart_svg(columns, metric), encoding="utf-8")
        written += [csv_path, svg_path]
    return written
