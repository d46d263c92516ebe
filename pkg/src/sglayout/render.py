"""Deterministic SVG rendering of layouts: one colored rectangle and one label per object."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Sequence, Tuple
from xml.sax.saxutils import escape, quoteattr


@dataclass(frozen=True)
class RenderStyle:
    width: int = 512
    height: int = 512
    stroke_width: float = 2.0
    font_size: float = 12.0

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"canvas must be positive, got {self.width}x{self.height}")


def category_color(name: str) -> str:
    """Stable hue from the category name, independent of vocabulary order."""
    hue = int(hashlib.sha256(name.encode("utf-8")).hexdigest()[:8], 16) % 360
    return f"hsl({hue},70%,45%)"


def _num(v: float) -> str:
    text = f"{v:.3f}".rstrip("0").rstrip(".")
    return "0" if text in ("-0", "") else text


def render_svg(objects: Sequence[Tuple[str, Sequence[float]]], style: RenderStyle = RenderStyle()) -> str:
    """SVG text for ``(category, (x, y, w, h))`` pairs in normalized center format."""
    W, H = style.width, style.height
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
    ]
    for name, (x, y, w, h) in objects:
        color = category_color(name)
        left, top = (x - w / 2) * W, (y - h / 2) * H
        out.append(
            f'<rect x="{_num(left)}" y="{_num(top)}" width="{_num(w * W)}" height="{_num(h * H)}" '
            f'fill="none" stroke="{color}" stroke-width="{_num(style.stroke_width)}"/>'
        )
        out.append(
            f'<text x="{_num(left + 2)}" y="{_num(top + style.font_size)}" font-size="{_num(style.font_size)}" '
            f'font-family="sans-serif" fill={quoteattr(color)}>{escape(name)}</text>'
        )
    out.append("</svg>")
    return "\n".join(out) + "\n"
