"""SVG export for stroke sets, plus a matching path parser for round-trips.

One ``<path>`` element per stroke, in drawing order, with a single cubic
segment ``M p0 C p1 p2 p3``. Coordinates are scaled to a square viewBox
(512 by default) and printed with fixed precision, so exporting a prefix of
a set yields a byte-for-byte prefix of the full export's path list.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from xml.etree import ElementTree

import numpy as np

from .geometry import CubicBezier, Strokes, as_subset

_COORD_FMT = "{:.6f}"


@dataclass(frozen=True)
class SvgStyle:
    viewbox: int = 512
    color: str = "#000000"
    background: str | None = None  # e.g. "#ffffff"; None leaves the page bare


def export_svg(strokes: Strokes | None, style: SvgStyle = SvgStyle()) -> str:
    """Serialize strokes to an SVG 1.1 document string.

    Stroke half-thickness maps to the SVG stroke-width (full thickness) in
    viewBox units; caps are round. ``strokes=None`` or an empty subset gives
    a valid document with zero paths.
    """
    vb = style.viewbox
    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'viewBox="0 0 {vb} {vb}">',
    ]
    if style.background is not None:
        lines.append(f'<rect width="{vb}" height="{vb}" fill="{style.background}"/>')
    if strokes is not None:
        parent, indices = as_subset(strokes)
        for gi in indices:
            s = parent.strokes[gi]
            pts = [_COORD_FMT.format(v) for v in (s.points * vb).ravel()]
            d = (
                f"M {pts[0]} {pts[1]} "
                f"C {pts[2]} {pts[3]}, {pts[4]} {pts[5]}, {pts[6]} {pts[7]}"
            )
            width = _COORD_FMT.format(2.0 * s.width * vb)
            opacity = _COORD_FMT.format(s.opacity)
            lines.append(
                f'<path d="{d}" fill="none" stroke="{style.color}" '
                f'stroke-width="{width}" stroke-opacity="{opacity}" '
                f'stroke-linecap="round"/>'
            )
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


_NUM = re.compile(r"[-+]?\d*\.?\d+(?:[eE][-+]?\d+)?")


def parse_svg_strokes(text: str) -> list[CubicBezier]:
    """Parse single-segment cubic paths back out of an exported document.

    Only the subset of SVG produced by :func:`export_svg` is supported.
    """
    root = ElementTree.fromstring(text)
    viewbox = root.get("viewBox")
    if viewbox is None:
        raise ValueError("missing viewBox")
    vb = float(viewbox.split()[2])
    strokes = []
    for el in root.iter():
        if not el.tag.endswith("path"):
            continue
        nums = [float(v) for v in _NUM.findall(el.get("d", ""))]
        if len(nums) != 8:
            raise ValueError(f"expected one cubic segment (8 numbers), got {len(nums)}")
        pts = np.array(nums, dtype=np.float64).reshape(4, 2) / vb
        width = float(el.get("stroke-width", "1")) / (2.0 * vb)
        opacity = float(el.get("stroke-opacity", "1"))
        strokes.append(CubicBezier(pts, width=width, opacity=opacity))
    return strokes


def svg_path_count(text: str) -> int:
    root = ElementTree.fromstring(text)
    return sum(1 for el in root.iter() if el.tag.endswith("path"))
