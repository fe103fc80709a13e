from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path
from typing import Optional, Sequence, Union
from xml.sax.saxutils import escape

from .harness import MetricsReport

METRIC_COLUMNS = (
    "name",
    "users",
    "clicks_per_user",
    "ctr",
    "sales_per_user",
    "attributed_sales_per_user",
    "sales_ci_low",
    "sales_ci_high",
)


def _csv(header: Sequence[str], rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def bar_chart_svg(
    title: str,
    labels: Sequence[str],
    values: Sequence[float],
    lows: Optional[Sequence[float]] = None,
    highs: Optional[Sequence[float]] = None,
    width: int = 640,
    height: int = 360,
) -> str:
    """A standalone SVG bar chart, with optional error whiskers."""
    left, right, top, bottom = 60, 20, 40, 90
    plot_w, plot_h = width - left - right, height - top - bottom
    candidates = [0.0, *values, *(highs or []), *(lows or [])]
    finite = [v for v in candidates if math.isfinite(v)]
    vmax, vmin = max(finite), min(finite)
    if vmax == vmin:
        vmax = vmin + 1.0
    scale = plot_h / (vmax - vmin)
    y = lambda v: top + (vmax - v) * scale
    slot = plot_w / max(len(values), 1)
    bar = slot * 0.6

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="24" text-anchor="middle" font-family="sans-serif" font-size="16">{escape(title)}</text>',
        f'<line x1="{left}" y1="{y(0.0):.2f}" x2="{width - right}" y2="{y(0.0):.2f}" stroke="black"/>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + plot_h}" stroke="black"/>',
    ]
    for tick in (vmin, (vmin + vmax) / 2, vmax):
        parts.append(
            f'<text x="{left - 6}" y="{y(tick) + 4:.2f}" text-anchor="end" font-family="sans-serif" font-size="11">{tick:.3g}</text>'
        )
    for i, (label, v) in enumerate(zip(labels, values)):
        cx = left + slot * (i + 0.5)
        if math.isfinite(v):
            y0, y1 = sorted((y(0.0), y(v)))
            parts.append(
                f'<rect x="{cx - bar / 2:.2f}" y="{y0:.2f}" width="{bar:.2f}" height="{y1 - y0:.2f}" fill="#4878a8"/>'
            )
        if lows is not None and highs is not None:
            lo, hi = lows[i], highs[i]
            parts.append(f'<line x1="{cx:.2f}" y1="{y(lo):.2f}" x2="{cx:.2f}" y2="{y(hi):.2f}" stroke="black"/>')
            for end in (lo, hi):
                parts.append(
                    f'<line x1="{cx - 6:.2f}" y1="{y(end):.2f}" x2="{cx + 6:.2f}" y2="{y(end):.2f}" stroke="black"/>'
                )
        ty = top + plot_h + 14
        parts.append(
            f'<text x="{cx:.2f}" y="{ty}" text-anchor="end" transform="rotate(-30 {cx:.2f} {ty})" '
            f'font-family="sans-serif" font-size="11">{escape(label)}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def emit_report(report: MetricsReport, output_dir: Union[str, Path]) -> list[Path]:
    """Write CSV tables, a JSON summary and SVG charts; return the paths written."""
    out = Path(output_dir)
    files: dict[str, str] = {}
    files["metrics.csv"] = _csv(METRIC_COLUMNS, [[getattr(m, c) for c in METRIC_COLUMNS] for m in report.agents])
    if report.paired:
        files["paired.csv"] = _csv(
            ("arm", "reference", "mean", "ci_low", "ci_high"),
            [[d.arm, d.reference, d.mean, d.ci_low, d.ci_high] for d in report.paired],
        )
    if report.ranking:
        files["ranking.csv"] = _csv(
            ("scheme", "mean_tau", "n_defined", "n_undefined"),
            [[k, v.mean_tau, v.n_defined, v.n_undefined] for k, v in report.ranking.items()],
        )
        files["ranking_tau.svg"] = bar_chart_svg(
            "Mean Kendall tau vs oracle ranking",
            list(report.ranking),
            [v.mean_tau for v in report.ranking.values()],
        )
    files["summary.json"] = json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"
    files["sales_per_user.svg"] = bar_chart_svg(
        "Sales per user (95% bootstrap CI)",
        [m.name for m in report.agents],
        [m.sales_per_user for m in report.agents],
        [m.sales_ci_low for m in report.agents],
        [m.sales_ci_high for m in report.agents],
    )
    try:
        out.mkdir(parents=True, exist_ok=True)
        written = []
        for name, text in files.items():
            path = out / name
            path.write_text(text, encoding="utf-8")
            written.append(path)
    except OSError as exc:
        raise OSError(f"cannot write report to {out}: {exc}") from exc
    return written
