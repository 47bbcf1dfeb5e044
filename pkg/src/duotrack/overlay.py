"""Per-frame SVG overlays of tracked boxes, colored by identity."""
from __future__ import annotations

import os
from typing import Sequence

from .association import FrameResult


def _color(track_id: int) -> str:
    # golden-angle hue stepping keeps nearby ids visually distinct
    hue = (track_id * 137.508) % 360.0
    return f"hsl({hue:.1f}, 85%, 45%)"


def render_frame_svg(result: FrameResult, frame_dims: tuple[float, float]) -> str:
    width, height = frame_dims
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:g}" height="{height:g}" '
        f'viewBox="0 0 {width:g} {height:g}">',
        f'<rect width="{width:g}" height="{height:g}" fill="#111"/>',
        f'<text x="6" y="16" fill="#eee" font-size="12" font-family="monospace">frame {result.frame}</text>',
    ]
    for track_id, box in sorted(result.tracks):
        color = _color(track_id)
        parts.append(
            f'<rect x="{box.x0:.2f}" y="{box.y0:.2f}" width="{box.w:.2f}" height="{box.h:.2f}" '
            f'fill="none" stroke="{color}" stroke-width="2"/>'
        )
        parts.append(
            f'<text x="{box.x0 + 2:.2f}" y="{max(box.y0 - 4, 10):.2f}" fill="{color}" '
            f'font-size="12" font-family="monospace">{track_id}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write_overlays(results: Sequence[FrameResult], out_dir: str, frame_dims: tuple[float, float]) -> list[str]:
    """Write one SVG per frame; returns the created paths."""
    os.makedirs(out_dir, exist_ok=True)
    written = []
    for result in results:
        path = os.path.join(out_dir, f"frame_{result.frame:06d}.svg")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(render_frame_svg(result, frame_dims))
        written.append(path)
    return written
