"""
@file svg.py
@brief Scrittore SVG minimale: grafici a linee (asse y log opzionale) e heatmap
       della regione di stabilità con la frontiera analitica sovrapposta.
@ingroup storage_module
"""

from __future__ import annotations
import logging
import math
from collections.abc import Callable, Mapping, Sequence
from pathlib import Path
from xml.sax.saxutils import escape

from calore.domain.models import RegionGrid

logger = logging.getLogger(__name__)

WIDTH, HEIGHT = 640, 420
MARGIN = 56
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf")


class _Frame:
    """@brief Mappa coordinate dati → pixel nel riquadro del grafico."""

    def __init__(self, x_range: tuple[float, float], y_range: tuple[float, float]) -> None:
        self.x0, self.x1 = x_range
        self.y0, self.y1 = y_range
        if self.x1 == self.x0:
            self.x1 = self.x0 + 1.0
        if self.y1 == self.y0:
            self.y1 = self.y0 + 1.0

    def px(self, x: float) -> float:
        return MARGIN + (x - self.x0) / (self.x1 - self.x0) * (WIDTH - 2 * MARGIN)

    def py(self, y: float) -> float:
        return HEIGHT - MARGIN - (y - self.y0) / (self.y1 - self.y0) * (HEIGHT - 2 * MARGIN)


def _axes(frame: _Frame, xlabel: str, ylabel: str, title: str, log_y: bool) -> list[str]:
    left, right = MARGIN, WIDTH - MARGIN
    top, bottom = MARGIN, HEIGHT - MARGIN
    ylab = f"log10 {ylabel}" if log_y else ylabel
    return [
        f'<rect x="{left}" y="{top}" width="{right - left}" height="{bottom - top}" '
        'fill="none" stroke="#333"/>',
        f'<text x="{WIDTH / 2}" y="{MARGIN / 2}" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<text x="{WIDTH / 2}" y="{HEIGHT - 12}" text-anchor="middle" font-size="12">{escape(xlabel)}</text>',
        f'<text x="14" y="{HEIGHT / 2}" transform="rotate(-90 14 {HEIGHT / 2})" '
        f'text-anchor="middle" font-size="12">{escape(ylab)}</text>',
        f'<text x="{left}" y="{bottom + 16}" font-size="10">{frame.x0:.3g}</text>',
        f'<text x="{right}" y="{bottom + 16}" text-anchor="end" font-size="10">{frame.x1:.3g}</text>',
        f'<text x="{left - 4}" y="{bottom}" text-anchor="end" font-size="10">{frame.y0:.3g}</text>',
        f'<text x="{left - 4}" y="{top + 8}" text-anchor="end" font-size="10">{frame.y1:.3g}</text>',
    ]


def _document(body: list[str]) -> str:
    head = (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">'
    )
    return "\n".join([head, '<rect width="100%" height="100%" fill="white"/>', *body, "</svg>"]) + "\n"


def line_plot(
    series: Mapping[str, tuple[Sequence[float], Sequence[float]]],
    *,
    log_y: bool = False,
    title: str = "",
    xlabel: str = "t",
    ylabel: str = "E|U|^2",
) -> str:
    """
    @brief Una polilinea per serie, con legenda.
    @details Con log_y i valori non positivi o non finiti vengono scartati.
    """
    cleaned: dict[str, list[tuple[float, float]]] = {}
    for label, (xs, ys) in series.items():
        pts = []
        for x, y in zip(xs, ys, strict=True):
            if not (math.isfinite(x) and math.isfinite(y)):
                continue
            if log_y:
                if y <= 0.0:
                    continue
                y = math.log10(y)
            pts.append((float(x), float(y)))
        cleaned[label] = pts
    all_pts = [p for pts in cleaned.values() for p in pts]
    if not all_pts:
        frame = _Frame((0.0, 1.0), (0.0, 1.0))
    else:
        frame = _Frame(
            (min(p[0] for p in all_pts), max(p[0] for p in all_pts)),
            (min(p[1] for p in all_pts), max(p[1] for p in all_pts)),
        )
    body = _axes(frame, xlabel, ylabel, title, log_y)
    for idx, (label, pts) in enumerate(cleaned.items()):
        color = PALETTE[idx % len(PALETTE)]
        coords = " ".join(f"{frame.px(x):.2f},{frame.py(y):.2f}" for x, y in pts)
        body.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{coords}"/>')
        ly = MARGIN + 14 + 14 * idx
        body.append(
            f'<text x="{WIDTH - MARGIN - 4}" y="{ly}" text-anchor="end" font-size="11" '
            f'fill="{color}">{escape(label)}</text>'
        )
    return _document(body)


def region_heatmap(
    grid: RegionGrid,
    boundary: Callable[[float], float] | None = None,
    *,
    title: str = "regione di stabilità",
) -> str:
    """
    @brief Celle colorate per esito (numerico e analitico) e frontiera β0(β1).
    @details
    Colori: verde = stabile per entrambi, giallo = solo numerico, rosso = solo
    analitico, grigio = instabile.
    """
    b1, b0 = grid.beta1_axis, grid.beta0_axis
    d1 = (b1[1] - b1[0]) if len(b1) > 1 else 1.0
    d0 = (b0[1] - b0[0]) if len(b0) > 1 else 1.0
    frame = _Frame((b1[0] - d1 / 2, b1[-1] + d1 / 2), (b0[0] - d0 / 2, b0[-1] + d0 / 2))
    body = _axes(frame, "beta1", "beta0", title, log_y=False)
    cw = abs(frame.px(d1) - frame.px(0.0))
    ch = abs(frame.py(d0) - frame.py(0.0))
    for c in grid.cells:
        if c.numeric_stable and c.analytic_stable:
            color = "#2ca02c"
        elif c.numeric_stable:
            color = "#f2c12e"
        elif c.analytic_stable:
            color = "#d62728"
        else:
            color = "#cccccc"
        x = frame.px(c.beta1 - d1 / 2)
        y = frame.py(c.beta0 + d0 / 2)
        body.append(f'<rect x="{x:.2f}" y="{y:.2f}" width="{cw:.2f}" height="{ch:.2f}" fill="{color}"/>')
    if boundary is not None:
        samples = 200
        pts = []
        for s in range(samples + 1):
            x = frame.x0 + (frame.x1 - frame.x0) * s / samples
            y = boundary(x)
            if frame.y0 <= y <= frame.y1:
                pts.append(f"{frame.px(x):.2f},{frame.py(y):.2f}")
        if pts:
            body.append(f'<polyline fill="none" stroke="black" stroke-width="2" points="{" ".join(pts)}"/>')
    return _document(body)


def write_svg(path: str | Path, text: str) -> Path:
    p = Path(path)
    p.write_text(text, encoding="utf-8")
    logger.info("scritto %s", p)
    return p
