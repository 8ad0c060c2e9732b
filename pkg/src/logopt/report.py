"""Render comparison reports: per-cell curve CSVs, summary tables, SVG charts.

Every file is written with deterministic bytes (repr-exact floats, no
timestamps), so re-emitting the same report reproduces identical digests
and seeded runs can be pinned as regression fixtures.
"""

from __future__ import annotations

import csv
import hashlib
from pathlib import Path

import numpy as np

from .backtest import EquityCurve, Report

SUMMARY_FIELDS = (
    "strategy",
    "span",
    "seed",
    "final_wealth",
    "mean_log_return",
    "max_drawdown",
    "win_rate_vs_naive",
)

_PALETTE = (
    "#1f77b4",
    "#ff7f0e",
    "#2ca02c",
    "#d62728",
    "#9467bd",
    "#8c564b",
    "#e377c2",
    "#17becf",
)


def _span_tag(span: tuple[int, int]) -> str:
    return f"{span[0]}-{span[1]}"


def _fmt(x: float) -> str:
    return repr(float(x))


def emit_report(report: Report, out_dir, extra_files: list[Path] | None = None) -> list[Path]:
    """Write the report under ``out_dir``; returns every path written.

    Emits ``summary.csv``, ``summary.txt``, one ``curve_*.csv`` per cell, one
    ``span_*.svg`` per span, and finally ``manifest.csv`` listing each
    artifact with its SHA-256 content digest.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    path = out / "summary.csv"
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SUMMARY_FIELDS)
        for c in report.cells:
            writer.writerow(
                [
                    c.strategy,
                    _span_tag(c.span),
                    c.seed,
                    _fmt(c.final_wealth),
                    _fmt(c.mean_log_return),
                    _fmt(c.max_drawdown),
                    _fmt(c.win_rate_vs_naive),
                ]
            )
    written.append(path)

    path = out / "summary.txt"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_summary_text(report))
    written.append(path)

    for c in report.cells:
        path = out / f"curve_{c.strategy}_{_span_tag(c.span)}_{c.seed}.csv"
        _write_curve(c.curve, path)
        written.append(path)

    for span in report.spans:
        lines = {
            f"{c.strategy} (seed {c.seed})": c.curve.wealth
            for c in report.cells
            if c.span == span
        }
        if not lines:
            continue
        path = out / f"span_{_span_tag(span)}.svg"
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(wealth_chart_svg(lines, title=f"Total wealth, periods {_span_tag(span)}"))
        written.append(path)

    manifest = out / "manifest.csv"
    entries = sorted(written + list(extra_files or []), key=lambda p: p.name)
    with open(manifest, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["file", "sha256"])
        for p in entries:
            writer.writerow([p.name, hashlib.sha256(p.read_bytes()).hexdigest()])
    written.append(manifest)
    return written


def _summary_text(report: Report) -> str:
    header = f"{'strategy':>14s} {'span':>12s} {'seed':>6s} {'final':>12s} {'mean log':>12s} {'max dd':>10s} {'win rate':>10s}\n"
    lines = [header, "-" * len(header) + "\n"]
    for c in report.cells:
        lines.append(
            f"{c.strategy:>14s} {_span_tag(c.span):>12s} {c.seed:>6d} "
            f"{c.final_wealth:>12.6f} {c.mean_log_return:>12.8f} "
            f"{c.max_drawdown:>10.6f} {c.win_rate_vs_naive:>10.4f}\n"
        )
    if report.metadata:
        lines.append("\n")
        for k in sorted(report.metadata):
            lines.append(f"{k} = {report.metadata[k]}\n")
    return "".join(lines)


def _write_curve(curve: EquityCurve, path: Path) -> None:
    d = curve.weights.shape[1]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["step", "period", "wealth", "log_return"] + [f"w_{i}" for i in range(d)])
        writer.writerow([0, "", _fmt(curve.wealth[0]), ""] + [""] * d)
        for i in range(curve.log_returns.size):
            writer.writerow(
                [i + 1, curve.start + i, _fmt(curve.wealth[i + 1]), _fmt(curve.log_returns[i])]
                + [_fmt(w) for w in curve.weights[i]]
            )


def load_curve_csv(path) -> EquityCurve:
    """Inverse of the curve writer (used by the report re-rendering command)."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    d = len(header) - 4
    wealth = [float(body[0][2])]
    logret, weights, start = [], [], 0
    for row in body[1:]:
        start = int(row[1]) - (len(logret))
        wealth.append(float(row[2]))
        logret.append(float(row[3]))
        weights.append([float(v) for v in row[4:]])
    name = Path(path).stem
    return EquityCurve(
        strategy=name,
        start=start,
        wealth=np.asarray(wealth),
        weights=np.asarray(weights) if weights else np.zeros((0, d)),
        log_returns=np.asarray(logret),
    )


def wealth_chart_svg(lines: dict[str, np.ndarray], title: str = "") -> str:
    """Minimal deterministic SVG line chart of wealth paths."""
    width, height = 720, 440
    ml, mr, mt, mb = 70, 20, 40, 40
    plot_w, plot_h = width - ml - mr, height - mt - mb
    ys = np.concatenate([np.asarray(v, dtype=float) for v in lines.values()])
    y_lo, y_hi = float(ys.min()), float(ys.max())
    if y_hi - y_lo < 1e-12:
        y_lo, y_hi = y_lo - 0.5, y_hi + 0.5
    pad = 0.05 * (y_hi - y_lo)
    y_lo, y_hi = y_lo - pad, y_hi + pad
    n_max = max(len(v) for v in lines.values())

    def sx(i: int, n: int) -> float:
        return ml + plot_w * (i / max(n - 1, 1))

    def sy(y: float) -> float:
        return mt + plot_h * (1.0 - (y - y_lo) / (y_hi - y_lo))

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<text x="{ml}" y="24" font-family="monospace" font-size="14">{title}</text>',
        f'<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{mt + plot_h}" stroke="black"/>',
        f'<line x1="{ml}" y1="{mt + plot_h}" x2="{ml + plot_w}" y2="{mt + plot_h}" stroke="black"/>',
    ]
    for k in range(5):
        y = y_lo + (y_hi - y_lo) * k / 4
        py = sy(y)
        parts.append(
            f'<line x1="{ml - 4}" y1="{py:.2f}" x2="{ml}" y2="{py:.2f}" stroke="black"/>'
            f'<text x="4" y="{py + 4:.2f}" font-family="monospace" font-size="11">{y:.4f}</text>'
        )
    for k in range(5):
        i = round((n_max - 1) * k / 4)
        px = sx(i, n_max)
        parts.append(
            f'<line x1="{px:.2f}" y1="{mt + plot_h}" x2="{px:.2f}" y2="{mt + plot_h + 4}" stroke="black"/>'
            f'<text x="{px - 8:.2f}" y="{mt + plot_h + 18}" font-family="monospace" font-size="11">{i}</text>'
        )
    for idx, (name, values) in enumerate(lines.items()):
        color = _PALETTE[idx % len(_PALETTE)]
        n = len(values)
        points = " ".join(f"{sx(i, n):.2f},{sy(float(v)):.2f}" for i, v in enumerate(values))
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{points}"/>')
        ly = mt + 16 * idx
        parts.append(
            f'<line x1="{ml + plot_w - 170}" y1="{ly + 6}" x2="{ml + plot_w - 150}" y2="{ly + 6}" '
            f'stroke="{color}" stroke-width="3"/>'
            f'<text x="{ml + plot_w - 144}" y="{ly + 10}" font-family="monospace" font-size="11">{name}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
