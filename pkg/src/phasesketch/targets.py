"""Synthetic target masks for local target-match guidance.

Targets are ink-convention images built from shape descriptors, rasterized
by pixel-center membership at a chosen resolution. Descriptors are plain
dicts so they can live inside run-config JSON:

    {"kind": "disk", "cx": 0.4, "cy": 0.5, "r": 0.2}
    {"kind": "triangle", "vertices": [[x, y], [x, y], [x, y]]}
    {"kind": "rect", "x0": 0.1, "y0": 0.2, "x1": 0.5, "y1": 0.6}
    {"kind": "union", "parts": [descriptor, ...]}
    {"kind": "png", "path": "mask.png"}   # grayscale, dark = ink
"""

from __future__ import annotations

import numpy as np
from numpy.typing import NDArray

from .raster import InkImage, load_png


def _pixel_grid(resolution: int) -> tuple[NDArray, NDArray]:
    centers = (np.arange(resolution, dtype=np.float64) + 0.5) / resolution
    return np.meshgrid(centers, centers)  # (x, y), y increasing with row


def disk_mask(resolution: int, cx: float, cy: float, r: float) -> InkImage:
    x, y = _pixel_grid(resolution)
    return ((x - cx) ** 2 + (y - cy) ** 2 <= r**2).astype(np.float64)


def rect_mask(
    resolution: int, x0: float, y0: float, x1: float, y1: float
) -> InkImage:
    x, y = _pixel_grid(resolution)
    return ((x >= x0) & (x <= x1) & (y >= y0) & (y <= y1)).astype(np.float64)


def triangle_mask(resolution: int, vertices) -> InkImage:
    v = np.asarray(vertices, dtype=np.float64)
    if v.shape != (3, 2):
        raise ValueError(f"triangle needs 3 vertices, got shape {v.shape}")
    x, y = _pixel_grid(resolution)
    inside = np.ones_like(x, dtype=bool)
    signs = []
    for i in range(3):
        a, b = v[i], v[(i + 1) % 3]
        cross = (b[0] - a[0]) * (y - a[1]) - (b[1] - a[1]) * (x - a[0])
        signs.append(cross)
    pos = (signs[0] >= 0) & (signs[1] >= 0) & (signs[2] >= 0)
    neg = (signs[0] <= 0) & (signs[1] <= 0) & (signs[2] <= 0)
    inside = pos | neg
    return inside.astype(np.float64)


def build_target(descriptor: dict, resolution: int) -> InkImage:
    """Rasterize one target descriptor at the given resolution."""
    kind = descriptor.get("kind")
    if kind == "disk":
        return disk_mask(
            resolution, descriptor["cx"], descriptor["cy"], descriptor["r"]
        )
    if kind == "rect":
        return rect_mask(
            resolution,
            descriptor["x0"],
            descriptor["y0"],
            descriptor["x1"],
            descriptor["y1"],
        )
    if kind == "triangle":
        return triangle_mask(resolution, descriptor["vertices"])
    if kind == "union":
        parts = descriptor.get("parts", [])
        if not parts:
            raise ValueError("union target needs at least one part")
        mask = np.zeros((resolution, resolution), dtype=np.float64)
        for part in parts:
            mask = np.maximum(mask, build_target(part, resolution))
        return mask
    if kind == "png":
        img = load_png(descriptor["path"])
        if img.shape != (resolution, resolution):
            raise ValueError(
                f"target PNG is {img.shape}, expected {(resolution, resolution)}"
            )
        return img
    raise ValueError(f"unknown target kind: {kind!r}")


def binarize(img: InkImage, threshold: float = 0.5) -> NDArray[np.bool_]:
    return np.asarray(img) > threshold


def iou(a: NDArray[np.bool_], b: NDArray[np.bool_]) -> float:
    """Intersection over union of two boolean masks (1.0 if both empty)."""
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    union = np.logical_or(a, b).sum()
    if union == 0:
        return 1.0
    return float(np.logical_and(a, b).sum() / union)
