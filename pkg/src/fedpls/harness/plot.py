"""Dependency-free SVG line plots of learning curves."""
from __future__ import annotations

from html import escape
from pathlib import Path
from typing import Sequence

import numpy as np

from ..errors import ContractViolation

WIDTH, HEIGHT = 640, 400
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 64, 160, 32, 48
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f")


def render_svg(
    series: Sequence[Sequence[float]],
    labels: Sequence[str] | None = None,
    *,
    title: str = "",
    x_label: str = "episode",
    y_label: str = "network secrecy sum (bits/s/Hz)",
) -> str:
    if len(series) == 0 or any(len(s) == 0 for s in series):
        raise ContractViolation("need at least one non-empty series")
    labels = list(labels or [])
    labels += [""] * (len(series) - len(labels))
    arrays = [np.asarray(s, dtype=float) for s in series]
    finite = np.concatenate([a[np.isfinite(a)] for a in arrays]) if arrays else np.array([])
    y_lo = float(finite.min()) if finite.size else 0.0
    y_hi = float(finite.max()) if finite.size else 1.0
    if y_hi <= y_lo:
        y_lo, y_hi = y_lo - 0.5, y_hi + 0.5
    x_hi = max(a.size for a in arrays) - 1 or 1
    pw, ph = WIDTH - MARGIN_L - MARGIN_R, HEIGHT - MARGIN_T - MARGIN_B

    def px(i: float) -> float:
        return MARGIN_L + pw * i / x_hi

    def py(v: float) -> float:
        return MARGIN_T + ph * (1.0 - (v - y_lo) / (y_hi - y_lo))

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2:.1f}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<line x1="{MARGIN_L}" y1="{MARGIN_T + ph}" x2="{MARGIN_L + pw}" y2="{MARGIN_T + ph}" stroke="black"/>',
        f'<line x1="{MARGIN_L}" y1="{MARGIN_T}" x2="{MARGIN_L}" y2="{MARGIN_T + ph}" stroke="black"/>',
    ]
    for k in range(5):
        v = y_lo + (y_hi - y_lo) * k / 4
        out.append(f'<text x="{MARGIN_L - 6}" y="{py(v) + 4:.2f}" text-anchor="end" font-size="10">{v:.3g}</text>')
        i = x_hi * k / 4
        out.append(f'<text x="{px(i):.2f}" y="{MARGIN_T + ph + 16}" text-anchor="middle" font-size="10">{i:.0f}</text>')
    out.append(f'<text x="{MARGIN_L + pw / 2:.1f}" y="{HEIGHT - 8}" text-anchor="middle" font-size="12">{escape(x_label)}</text>')
    out.append(
        f'<text x="14" y="{MARGIN_T + ph / 2:.1f}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 14 {MARGIN_T + ph / 2:.1f})">{escape(y_label)}</text>'
    )
    for k, (arr, label) in enumerate(zip(arrays, labels)):
        color = PALETTE[k % len(PALETTE)]
        name = label or f"series-{k}"
        pts = " ".join(f"{px(i):.3f},{py(v):.3f}" for i, v in enumerate(arr) if np.isfinite(v))
        values = " ".join(repr(float(v)) for v in arr)
        out.append(
            f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}" '
            f'data-label="{escape(name)}" data-values="{values}"/>'
        )
        ly = MARGIN_T + 14 + 18 * k
        lx = WIDTH - MARGIN_R + 12
        out.append(f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 20}" y2="{ly - 4}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{lx + 26}" y="{ly}" font-size="11">{escape(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_plot(series, labels, output_path, **kwargs) -> Path:
    """Write :func:`render_svg` output to ``output_path``."""
    path = Path(output_path)
    svg = render_svg(series, labels, **kwargs)
    try:
        path.write_text(svg)
    except OSError as exc:
        raise ContractViolation(f"cannot write plot to {path}: {exc}") from exc
    return path
