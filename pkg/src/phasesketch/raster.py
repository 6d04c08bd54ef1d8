"""Differentiable stroke rasterizer and its vector-Jacobian products.

Rendering model
---------------
Each stroke is flattened to an M-point polyline (exact closest-point root
finding on the cubic is rejected on purpose: it is brittle around cusps,
and the polyline keeps gradients well behaved). A pixel at canvas position
x receives soft coverage

    c_s(x) = opacity_s * exp(-e_s(x)^2 / (2 * sigma^2)),

where e_s(x) = max(0, d_s(x) - width_s) is the pixel's clearance from the
stroke body: d_s is the distance from the pixel center to the polyline and
width_s is the stroke half-thickness. Inside the half-thickness the stroke
is fully inked (flat core); beyond it the ink falls off as a Gaussian of
scale sigma, so every pixel keeps a usable (if tiny) gradient. Strokes
composite order-independently:

    ink(x) = 1 - prod_s (1 - c_s(x)),

which keeps ink in [0, 1] and makes adding a stroke monotone.

Coverage below ~6e-13 (clearance beyond 7.5 sigma) is truncated to exactly
zero; this bounds the per-stroke working set to a small window around the
stroke, and the jump is far below every gradient-check tolerance.

The ink convention is 0 = blank paper, 1 = full ink. PNG dumps invert this
(white paper, black ink).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray
from PIL import Image

from .geometry import StrokeSet, Strokes, as_subset, bernstein_matrix

InkImage = NDArray[np.float64]  # (res, res), values in [0, 1], row-major, y down

# Clearance beyond which coverage is truncated to exactly zero:
# exp(-7.5^2 / 2) ~ 6e-13, well under all finite-difference tolerances.
_CUTOFF_SIGMAS = 7.5


@dataclass(frozen=True)
class RenderConfig:
    """Raster-time choices; geometry itself is resolution independent.

    ``softness_sigma`` is the Gaussian falloff scale in canvas units; the
    default is 1.5 pixel pitches at the configured resolution.
    """

    resolution: int = 224
    softness_sigma: float | None = None
    samples_per_curve: int = 32

    def __post_init__(self) -> None:
        if self.resolution < 8:
            raise ValueError(f"resolution must be >= 8, got {self.resolution}")
        if self.samples_per_curve < 2:
            raise ValueError(
                f"samples_per_curve must be >= 2, got {self.samples_per_curve}"
            )
        if self.softness_sigma is not None and not (self.softness_sigma > 0):
            raise ValueError(f"softness_sigma must be > 0, got {self.softness_sigma}")

    @property
    def sigma(self) -> float:
        """Effective falloff scale in canvas units."""
        if self.softness_sigma is not None:
            return self.softness_sigma
        return 1.5 / self.resolution


@dataclass
class _StrokeGeom:
    """Cached per-stroke raster geometry for the backward pass."""

    rows: slice
    cols: slice
    falloff: NDArray[np.float64]  # (P,) truncated exp term, pixels in the window
    clearance: NDArray[np.float64]  # (P,) e = max(0, d - width)
    beyond_core: NDArray[np.bool_]  # (P,) d > width
    seg_index: NDArray[np.intp]  # (P,) nearest polyline segment
    seg_t: NDArray[np.float64]  # (P,) clamped parameter on that segment
    away_unit: NDArray[np.float64]  # (P, 2) unit vector closest point -> pixel


@dataclass
class CoverageStack:
    """Per-stroke coverage maps plus cached geometry for one stroke group.

    ``maps[i]`` is the full-resolution coverage of stroke ``global_indices[i]``.
    Any subset of the group can be composited and differentiated without
    re-rasterizing.
    """

    parent: StrokeSet
    global_indices: tuple[int, ...]
    cfg: RenderConfig
    maps: NDArray[np.float64]  # (len(global_indices), res, res)
    geoms: list[_StrokeGeom]

    def local_index(self, global_index: int) -> int:
        return self.global_indices.index(global_index)


def _pixel_window(
    poly: NDArray[np.float64], margin: float, res: int
) -> tuple[slice, slice]:
    """Index window of pixels whose centers are within ``margin`` of the polyline bbox."""
    lo = poly.min(axis=0) - margin
    hi = poly.max(axis=0) + margin
    # pixel center of column c is (c + 0.5) / res (same for rows / y)
    c0 = max(0, int(np.ceil(lo[0] * res - 0.5)))
    c1 = min(res - 1, int(np.floor(hi[0] * res - 0.5)))
    r0 = max(0, int(np.ceil(lo[1] * res - 0.5)))
    r1 = min(res - 1, int(np.floor(hi[1] * res - 0.5)))
    if c0 > c1 or r0 > r1:
        return slice(0, 0), slice(0, 0)
    return slice(r0, r1 + 1), slice(c0, c1 + 1)


def _polyline_distance(
    px: NDArray[np.float64], poly: NDArray[np.float64]
) -> tuple[NDArray, NDArray, NDArray, NDArray]:
    """Distance from pixel centers to a polyline.

    Returns (d, seg_index, seg_t, away_unit): the distance, the nearest
    segment, the clamped parameter along it, and the unit vector from the
    closest point toward the pixel (zero where the distance is zero).
    """
    ax, ay = poly[:-1, 0], poly[:-1, 1]  # (S,)
    abx, aby = poly[1:, 0] - ax, poly[1:, 1] - ay
    denom = np.maximum(abx * abx + aby * aby, 1e-30)  # degenerate segs -> point
    relx = px[:, 0:1] - ax[None, :]  # (P, S), x and y handled separately
    rely = px[:, 1:2] - ay[None, :]
    t = np.clip((relx * abx + rely * aby) / denom, 0.0, 1.0)
    dx = relx - t * abx
    dy = rely - t * aby
    d2 = dx * dx + dy * dy  # (P, S)
    seg = np.argmin(d2, axis=1)
    rows = np.arange(px.shape[0])
    d = np.sqrt(d2[rows, seg])
    seg_t = t[rows, seg]
    unit = np.zeros((px.shape[0], 2), dtype=np.float64)
    nz = d > 0
    unit[nz, 0] = dx[rows, seg][nz] / d[nz]
    unit[nz, 1] = dy[rows, seg][nz] / d[nz]
    return d, seg, seg_t, unit


def stroke_coverage(strokes: Strokes, cfg: RenderConfig) -> CoverageStack:
    """Rasterize each stroke's soft coverage map once, caching the geometry.

    One stack serves every composite (cumulative prefixes, delta subsets)
    and every VJP of the same stroke group at this configuration.
    """
    parent, indices = as_subset(strokes)
    res = cfg.resolution
    sigma = cfg.sigma
    basis = bernstein_matrix(cfg.samples_per_curve)

    maps = np.zeros((len(indices), res, res), dtype=np.float64)
    geoms: list[_StrokeGeom] = []
    # shared pixel-center coordinate axis, canvas units
    centers = (np.arange(res, dtype=np.float64) + 0.5) / res

    for k, gi in enumerate(indices):
        s = parent.strokes[gi]
        poly = basis @ s.points  # (M, 2)
        margin = s.width + _CUTOFF_SIGMAS * sigma
        rows, cols = _pixel_window(poly, margin, res)
        xs = centers[cols]
        ys = centers[rows]
        if xs.size == 0 or ys.size == 0:
            geoms.append(
                _StrokeGeom(
                    rows, cols,
                    np.zeros(0), np.zeros(0), np.zeros(0, dtype=bool),
                    np.zeros(0, dtype=np.intp), np.zeros(0), np.zeros((0, 2)),
                )
            )
            continue
        gx, gy = np.meshgrid(xs, ys)
        px = np.stack([gx.ravel(), gy.ravel()], axis=1)
        d, seg, seg_t, unit = _polyline_distance(px, poly)
        clearance = np.maximum(0.0, d - s.width)
        falloff = np.exp(-0.5 * (clearance / sigma) ** 2)
        falloff[clearance > _CUTOFF_SIGMAS * sigma] = 0.0
        maps[k, rows, cols] = (s.opacity * falloff).reshape(ys.size, xs.size)
        geoms.append(
            _StrokeGeom(rows, cols, falloff, clearance, d > s.width, seg, seg_t, unit)
        )
    return CoverageStack(parent, tuple(indices), cfg, maps, geoms)


def composite(stack: CoverageStack, local_indices=None) -> InkImage:
    """Composite coverage maps: ink = 1 - prod(1 - c_s)."""
    if local_indices is None:
        sel = stack.maps
    else:
        sel = stack.maps[np.asarray(local_indices, dtype=np.intp)]
    res = stack.cfg.resolution
    if sel.shape[0] == 0:
        return np.zeros((res, res), dtype=np.float64)
    return 1.0 - np.prod(1.0 - sel, axis=0)


def composite_vjp(
    stack: CoverageStack,
    grad_image: InkImage,
    local_indices=None,
    out: NDArray[np.float64] | None = None,
) -> NDArray[np.float64]:
    """Gradient of <grad_image, composite(...)> w.r.t. every coverage map.

    Returns an array shaped like ``stack.maps``; strokes outside
    ``local_indices`` get zero. Pass ``out`` to accumulate several calls
    (different subsets, different gradient images) into one buffer. Uses
    prefix/suffix products so strokes with coverage exactly 1 (opaque flat
    cores) stay well-defined.
    """
    res = stack.cfg.resolution
    if grad_image.shape != (res, res):
        raise ValueError(
            f"grad_image shape {grad_image.shape} does not match resolution {res}"
        )
    if out is None:
        out = np.zeros_like(stack.maps)
    idx = (
        np.arange(stack.maps.shape[0])
        if local_indices is None
        else np.asarray(local_indices, dtype=np.intp)
    )
    if idx.size == 0:
        return out
    one_minus = 1.0 - stack.maps[idx]  # (k, res, res)
    k = one_minus.shape[0]
    prefix = np.empty_like(one_minus)
    prefix[0] = 1.0
    suffix = np.empty_like(one_minus)
    suffix[-1] = 1.0
    if k > 1:
        np.cumprod(one_minus[:-1], axis=0, out=prefix[1:])
        np.cumprod(one_minus[:0:-1], axis=0, out=suffix[-2::-1])
    # d ink / d c_i = prod_{j != i} (1 - c_j)
    prefix *= suffix
    prefix *= grad_image[None, :, :]
    out[idx] += prefix
    return out


def coverage_vjp(
    stack: CoverageStack, coverage_grads: NDArray[np.float64]
) -> NDArray[np.float64]:
    """Chain per-stroke coverage gradients back to the parent's flat theta.

    ``coverage_grads`` is shaped like ``stack.maps`` (one gradient image per
    stroke in the stack). The result has the parent StrokeSet's full theta
    length, with zeros for strokes not in the stack.
    """
    parent = stack.parent
    cfg = stack.cfg
    sigma = cfg.sigma
    basis = bernstein_matrix(cfg.samples_per_curve)
    p = parent.params_per_stroke
    theta_grad = np.zeros(parent.n * p, dtype=np.float64)

    for k, gi in enumerate(stack.global_indices):
        s = parent.strokes[gi]
        geom = stack.geoms[k]
        g_cov = coverage_grads[k, geom.rows, geom.cols].ravel()
        if g_cov.size == 0:
            continue
        # c = opacity * falloff(e),  d falloff / d e = -falloff * e / sigma^2
        g_fall = g_cov * s.opacity
        g_e = g_fall * geom.falloff * (-geom.clearance / sigma**2)
        g_d = np.where(geom.beyond_core, g_e, 0.0)  # e = d - width past the core

        # d distance / d segment endpoints via the nearest-point decomposition
        m = cfg.samples_per_curve
        w_a = -(1.0 - geom.seg_t) * g_d
        w_b = -geom.seg_t * g_d
        gp = np.stack(
            [
                np.bincount(geom.seg_index, w_a * geom.away_unit[:, 0], minlength=m)
                + np.bincount(geom.seg_index + 1, w_b * geom.away_unit[:, 0], minlength=m),
                np.bincount(geom.seg_index, w_a * geom.away_unit[:, 1], minlength=m)
                + np.bincount(geom.seg_index + 1, w_b * geom.away_unit[:, 1], minlength=m),
            ],
            axis=1,
        )
        g_ctrl = basis.T @ gp  # (4, 2)

        rec = [g_ctrl.ravel()]
        if parent.learn_width:
            # d e / d width = -1 wherever the pixel is past the core
            rec.append(np.array([-np.sum(g_e[geom.beyond_core])]))
        if parent.learn_opacity:
            rec.append(np.array([np.sum(g_cov * geom.falloff)]))
        theta_grad[gi * p : (gi + 1) * p] = np.concatenate(rec)
    return theta_grad


def render(strokes: Strokes, cfg: RenderConfig) -> InkImage:
    """Render a stroke set (or subset view) to an ink image in [0, 1].

    Deterministic given inputs. An empty subset renders all zeros.
    """
    parent, indices = as_subset(strokes)
    if len(indices) == 0:
        return np.zeros((cfg.resolution, cfg.resolution), dtype=np.float64)
    return composite(stroke_coverage(strokes, cfg))


def render_vjp(
    strokes: Strokes, cfg: RenderConfig, grad_image: InkImage
) -> NDArray[np.float64]:
    """Vector-Jacobian product of :func:`render`.

    Returns d<grad_image, render(strokes)>/d theta in the parent set's full
    flat layout; parameters of strokes outside the rendered subset are zero.
    """
    parent, indices = as_subset(strokes)
    grad_image = np.asarray(grad_image, dtype=np.float64)
    if grad_image.shape != (cfg.resolution, cfg.resolution):
        raise ValueError(
            f"grad_image shape {grad_image.shape} does not match "
            f"resolution {cfg.resolution}"
        )
    if len(indices) == 0:
        return np.zeros(parent.n * parent.params_per_stroke, dtype=np.float64)
    stack = stroke_coverage(strokes, cfg)
    cov_grads = composite_vjp(stack, grad_image)
    return coverage_vjp(stack, cov_grads)


# --- Gaussian blur ----------------------------------------------------------
#
# The blur is realized as a dense (res x res) 1-D blur matrix applied to rows
# and columns: out = K @ img @ K.T. Reflect boundary handling is folded into
# K, so constant images stay constant and the adjoint is exactly
# K.T @ g @ K -- no separate boundary bookkeeping in the VJP.

_blur_matrix_cache: dict[tuple[int, float], NDArray[np.float64]] = {}


def _blur_matrix(n: int, sigma: float) -> NDArray[np.float64]:
    key = (n, float(sigma))
    cached = _blur_matrix_cache.get(key)
    if cached is not None:
        return cached
    radius = int(np.ceil(3.0 * sigma))
    offsets = np.arange(-radius, radius + 1)
    kernel = np.exp(-0.5 * (offsets / sigma) ** 2)
    kernel /= kernel.sum()
    mat = np.zeros((n, n), dtype=np.float64)
    for off, w in zip(offsets, kernel):
        src = np.arange(n) + off
        # reflect about the edges: ..., 1, 0 | 0, 1, ..., n-1 | n-1, n-2, ...
        src = np.where(src < 0, -1 - src, src)
        src = np.where(src >= n, 2 * n - 1 - src, src)
        mat[np.arange(n), src] += w
    mat.setflags(write=False)
    _blur_matrix_cache[key] = mat
    return mat


def gaussian_blur(img: InkImage, blur_sigma: float) -> InkImage:
    """Gaussian blur with kernel truncated at radius ceil(3*sigma), renormalized.

    ``blur_sigma`` is in pixels; 0 is the identity. Values stay in [0, 1]
    because every output is a convex combination of inputs.
    """
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2 or img.shape[0] != img.shape[1]:
        raise ValueError(f"expected a square image, got shape {img.shape}")
    if blur_sigma < 0:
        raise ValueError(f"blur_sigma must be >= 0, got {blur_sigma}")
    if blur_sigma == 0:
        return img.copy()
    k = _blur_matrix(img.shape[0], blur_sigma)
    return k @ img @ k.T


def blur_vjp(grad_out: InkImage, blur_sigma: float) -> InkImage:
    """Exact adjoint of :func:`gaussian_blur` at the same sigma."""
    grad_out = np.asarray(grad_out, dtype=np.float64)
    if grad_out.ndim != 2 or grad_out.shape[0] != grad_out.shape[1]:
        raise ValueError(f"expected a square gradient, got shape {grad_out.shape}")
    if blur_sigma < 0:
        raise ValueError(f"blur_sigma must be >= 0, got {blur_sigma}")
    if blur_sigma == 0:
        return grad_out.copy()
    k = _blur_matrix(grad_out.shape[0], blur_sigma)
    return k.T @ grad_out @ k


# --- PNG I/O ----------------------------------------------------------------


def save_png(img: InkImage, path) -> None:
    """Write an ink image as 8-bit grayscale PNG (white paper, black ink)."""
    img = np.asarray(img, dtype=np.float64)
    gray = np.round(255.0 * (1.0 - np.clip(img, 0.0, 1.0))).astype(np.uint8)
    Image.fromarray(gray, mode="L").save(path)


def load_png(path) -> InkImage:
    """Read a grayscale PNG back into the ink convention."""
    gray = np.asarray(Image.open(path).convert("L"), dtype=np.float64)
    return 1.0 - gray / 255.0
