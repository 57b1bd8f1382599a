"""Merge per-run learning curves into a tidy CSV and draw plain SVG line charts."""

from __future__ import annotations

import csv
from pathlib import Path
from xml.sax.saxutils import escape

from .training import TrainReport, read_report_csv

CURVE_METRICS = TrainReport.COLUMNS[1:]
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf")


def find_reports(paths) -> list[Path]:
    found = []
    for p in map(Path, paths):
        if p.is_file():
            found.append(p)
        elif p.is_dir():
            found.extend(sorted(p.rglob("train_report.csv")))
        else:
            raise FileNotFoundError(f"no such run directory or report: {p}")
    if not found:
        raise FileNotFoundError(f"no train_report.csv under {', '.join(map(str, paths))}")
    return found


def tidy_rows(paths) -> list[dict]:
    """One row per (run, epoch, metric)."""
    rows = []
    for path in find_reports(paths):
        meta, records = read_report_csv(path)
        if "fingerprint" not in meta:
            raise ValueError(f"{path}: report header lacks a fingerprint")
        run = str(path.parent)
        for rec in records:
            for metric in CURVE_METRICS:
                rows.append({
                    "run": run,
                    "fingerprint": meta["fingerprint"],
                    "seed": meta.get("seed", ""),
                    "mode": meta.get("mode", ""),
                    "epoch": int(rec["epoch"]),
                    "metric": metric,
                    "value": rec[metric],
                })
    return rows


def write_tidy(rows: list[dict], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["run", "fingerprint", "seed", "mode", "epoch",
                                                "metric", "value"], lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({**row, "value": repr(float(row["value"]))})
    return path


def svg_chart(series: dict[str, list[tuple[float, float]]], title: str,
              width: int = 480, height: int = 300) -> str:
    """Self-contained SVG line chart; ``series`` maps a label to (x, y) points."""
    pad_l, pad_r, pad_t, pad_b = 60, 130, 30, 40
    pts = [p for s in series.values() for p in s]
    xs = [p[0] for p in pts] or [0.0, 1.0]
    ys = [p[1] for p in pts] or [0.0, 1.0]
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    pw, ph = width - pad_l - pad_r, height - pad_t - pad_b

    def sx(x):
        return pad_l + (x - x0) / (x1 - x0) * pw

    def sy(y):
        return pad_t + ph - (y - y0) / (y1 - y0) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}">',
           f'<rect width="{width}" height="{height}" fill="white"/>',
           f'<text x="{width / 2:.1f}" y="18" text-anchor="middle" font-family="sans-serif" '
           f'font-size="13">{escape(title)}</text>',
           f'<line x1="{pad_l}" y1="{pad_t + ph}" x2="{pad_l + pw}" y2="{pad_t + ph}" stroke="black"/>',
           f'<line x1="{pad_l}" y1="{pad_t}" x2="{pad_l}" y2="{pad_t + ph}" stroke="black"/>']
    for val, ypos in ((y0, pad_t + ph), (y1, pad_t)):
        out.append(f'<text x="{pad_l - 4}" y="{ypos + 4:.1f}" text-anchor="end" '
                   f'font-family="sans-serif" font-size="10">{val:.4g}</text>')
    for val, xpos in ((x0, pad_l), (x1, pad_l + pw)):
        out.append(f'<text x="{xpos:.1f}" y="{pad_t + ph + 14}" text-anchor="middle" '
                   f'font-family="sans-serif" font-size="10">{val:.4g}</text>')
    for i, (label, pts) in enumerate(series.items()):
        color = PALETTE[i % len(PALETTE)]
        path = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in pts)
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{path}"/>')
        ly = pad_t + 12 + 14 * i
        out.append(f'<line x1="{pad_l + pw + 8}" y1="{ly}" x2="{pad_l + pw + 24}" y2="{ly}" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{pad_l + pw + 28}" y="{ly + 4}" font-family="sans-serif" '
                   f'font-size="10">{escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_svgs(rows: list[dict], out_dir) -> list[Path]:
    """One chart per metric, one line per run."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for metric in CURVE_METRICS:
        series: dict[str, list[tuple[float, float]]] = {}
        for row in rows:
            if row["metric"] == metric:
                label = f"{row['mode'] or 'run'} s{row['seed']} {row['fingerprint'][:6]}"
                series.setdefault(label, []).append((row["epoch"], row["value"]))
        if series:
            path = out_dir / f"{metric}.svg"
            path.write_text(svg_chart(series, metric))
            written.append(path)
    return written


def cmd_report(run_dirs, out, svg: bool = True) -> dict:
    rows = tidy_rows(run_dirs)
    out = Path(out)
    tidy = write_tidy(rows, out / "curves_tidy.csv")
    charts = write_svgs(rows, out) if svg else []
    return {"tidy_csv": str(tidy), "rows": len(rows), "svg": [str(p) for p in charts]}
