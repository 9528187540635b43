"""SVG emission: occupancy with motion arrows, and reliability heat maps."""

from __future__ import annotations

import numpy as np

from .grid import BevMap, CellSet, MotionField

_CELL_PX = 8


def _svg_header(h: int, w: int) -> list[str]:
    return [f'<svg xmlns="http://www.w3.org/2000/svg" '
            f'width="{w * _CELL_PX}" height="{h * _CELL_PX}" '
            f'viewBox="0 0 {w * _CELL_PX} {h * _CELL_PX}">',
            f'<rect width="{w * _CELL_PX}" height="{h * _CELL_PX}" fill="#ffffff"/>']


def _cell_rect(r: int, c: int, color: str) -> str:
    return (f'<rect x="{c * _CELL_PX}" y="{r * _CELL_PX}" '
            f'width="{_CELL_PX}" height="{_CELL_PX}" fill="{color}"/>')


def render_motion(bev: BevMap, motion: MotionField) -> str:
    """Quiver overlay: occupied cells in gray, displacement arrows in red."""
    h, w = bev.pillar_mask.shape
    parts = _svg_header(h, w)
    for r, c in np.argwhere(bev.pillar_mask):
        parts.append(_cell_rect(r, c, "#c8c8c8"))
    for r, c in np.argwhere(motion.validity & bev.pillar_mask):
        dr, dc = motion.displacement[r, c]
        if dr == 0.0 and dc == 0.0:
            continue
        x0 = (c + 0.5) * _CELL_PX
        y0 = (r + 0.5) * _CELL_PX
        x1 = x0 + dc * _CELL_PX
        y1 = y0 + dr * _CELL_PX
        parts.append(f'<line x1="{x0:.2f}" y1="{y0:.2f}" x2="{x1:.2f}" y2="{y1:.2f}" '
                     f'stroke="#d62728" stroke-width="1.5"/>')
    parts.append("</svg>")
    return "\n".join(parts)


def render_reliability(shape: tuple[int, int], cells: CellSet, delta_m: np.ndarray,
                       saturation: float = 2.0) -> str:
    """Heat map of the per-cell reliability score (white = 0, red = high)."""
    h, w = shape
    parts = _svg_header(h, w)
    level = np.clip(np.asarray(delta_m, dtype=np.float64) / saturation, 0.0, 1.0)
    for (r, c), v in zip(cells.coords, level):
        shade = int(round(255 * (1.0 - v)))
        parts.append(_cell_rect(int(r), int(c), f"#ff{shade:02x}{shade:02x}"))
    parts.append("</svg>")
    return "\n".join(parts)
