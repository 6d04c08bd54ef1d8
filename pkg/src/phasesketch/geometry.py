"""Stroke geometry: cubic Bezier strokes, stroke sets, and phase partitions.

The canvas is the unit square [0, 1]^2 with y pointing down (matching image
row order). All stroke parameters live in canvas units, so geometry stays
resolution-independent; picking a pixel grid is the rasterizer's job.

Phase indices are 1-based throughout the public API: phase ``i`` covers the
cumulative stroke prefix ``strokes[0:boundaries[i-1]]``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Union

import numpy as np
from numpy.typing import NDArray

DEFAULT_WIDTH = 0.006  # stroke half-thickness, canvas units
DEFAULT_OPACITY = 1.0

# Flattened per-stroke record layout (10 slots); which slots enter the
# learnable parameter vector depends on the StrokeSet's learn flags.
_SLOT_NAMES = (
    "p0x", "p0y", "p1x", "p1y", "p2x", "p2y", "p3x", "p3y", "width", "opacity",
)


@dataclass(frozen=True)
class CubicBezier:
    """A single cubic Bezier stroke.

    Control points may wander outside the canvas during optimization; they
    are clipped only at raster time (clamping here would kill gradients at
    the border).
    """

    points: NDArray[np.float64]  # (4, 2) control points p0..p3
    width: float = DEFAULT_WIDTH  # half-thickness, canvas units
    opacity: float = DEFAULT_OPACITY

    def __post_init__(self) -> None:
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.shape != (4, 2):
            raise ValueError(f"control points must have shape (4, 2), got {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("control points must be finite")
        if not (self.width > 0):
            raise ValueError(f"width must be > 0, got {self.width}")
        if not (0.0 <= self.opacity <= 1.0):
            raise ValueError(f"opacity must be in [0, 1], got {self.opacity}")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def p0(self) -> NDArray[np.float64]:
        return self.points[0]

    @property
    def p1(self) -> NDArray[np.float64]:
        return self.points[1]

    @property
    def p2(self) -> NDArray[np.float64]:
        return self.points[2]

    @property
    def p3(self) -> NDArray[np.float64]:
        return self.points[3]


@lru_cache(maxsize=32)
def _bernstein_matrix_cached(n: int) -> NDArray[np.float64]:
    t = np.linspace(0.0, 1.0, n)
    return bernstein_basis(t)


def bernstein_basis(t: NDArray[np.float64]) -> NDArray[np.float64]:
    """Cubic Bernstein basis evaluated at parameters ``t``, shape (len(t), 4)."""
    t = np.asarray(t, dtype=np.float64)
    s = 1.0 - t
    return np.stack([s**3, 3.0 * s**2 * t, 3.0 * s * t**2, t**3], axis=-1)


def bernstein_matrix(n: int) -> NDArray[np.float64]:
    """Basis matrix for ``n`` uniformly spaced parameters in [0, 1]."""
    return _bernstein_matrix_cached(n)


def eval_bezier(curve: CubicBezier, t) -> NDArray[np.float64]:
    """Evaluate a cubic Bezier at parameter ``t`` in [0, 1].

    Accepts a scalar or an array of parameters; returns (2,) or (len(t), 2).
    """
    t_arr = np.asarray(t, dtype=np.float64)
    if np.any(t_arr < 0.0) or np.any(t_arr > 1.0):
        raise ValueError(f"t must lie in [0, 1], got {t}")
    basis = bernstein_basis(np.atleast_1d(t_arr))
    out = basis @ curve.points
    return out[0] if t_arr.ndim == 0 else out


@dataclass(frozen=True)
class StrokeSet:
    """An ordered set of strokes plus the switches that define theta.

    Control points are always learnable; width and opacity join the
    parameter vector only when the corresponding flag is set. Stroke order
    is stable and defines drawing order.
    """

    strokes: tuple[CubicBezier, ...]
    learn_width: bool = False
    learn_opacity: bool = False

    def __post_init__(self) -> None:
        strokes = tuple(self.strokes)
        if len(strokes) < 1:
            raise ValueError("a StrokeSet needs at least one stroke")
        object.__setattr__(self, "strokes", strokes)

    @property
    def n(self) -> int:
        return len(self.strokes)

    @property
    def params_per_stroke(self) -> int:
        return 8 + int(self.learn_width) + int(self.learn_opacity)

    def control_points(self) -> NDArray[np.float64]:
        """All control points, shape (N, 4, 2)."""
        return np.stack([s.points for s in self.strokes])

    def widths(self) -> NDArray[np.float64]:
        return np.array([s.width for s in self.strokes], dtype=np.float64)

    def opacities(self) -> NDArray[np.float64]:
        return np.array([s.opacity for s in self.strokes], dtype=np.float64)

    def learnable_mask(self) -> NDArray[np.bool_]:
        """Per-stroke flags over the 10-slot record layout, shape (N, 10).

        Slots are (p0x, p0y, ..., p3y, width, opacity).
        """
        row = np.array([True] * 8 + [self.learn_width, self.learn_opacity])
        return np.tile(row, (self.n, 1))

    def flatten(self) -> NDArray[np.float64]:
        """The learnable parameter vector theta.

        Layout per stroke: 8 control coordinates, then width and/or opacity
        if learnable. Total length = N * params_per_stroke.
        """
        parts = []
        for s in self.strokes:
            rec = [s.points.ravel()]
            if self.learn_width:
                rec.append(np.array([s.width]))
            if self.learn_opacity:
                rec.append(np.array([s.opacity]))
            parts.append(np.concatenate(rec))
        return np.concatenate(parts)

    def with_flat_params(self, theta: NDArray[np.float64]) -> "StrokeSet":
        """Rebuild the set from a flat theta (inverse of :meth:`flatten`)."""
        theta = np.asarray(theta, dtype=np.float64)
        p = self.params_per_stroke
        if theta.shape != (self.n * p,):
            raise ValueError(
                f"theta has length {theta.size}, expected {self.n * p}"
            )
        strokes = []
        for i, s in enumerate(self.strokes):
            rec = theta[i * p : (i + 1) * p]
            pts = rec[:8].reshape(4, 2)
            k = 8
            width = s.width
            opacity = s.opacity
            if self.learn_width:
                width = float(rec[k])
                k += 1
            if self.learn_opacity:
                opacity = float(np.clip(rec[k], 0.0, 1.0))
            strokes.append(CubicBezier(pts, width=width, opacity=opacity))
        return replace(self, strokes=tuple(strokes))


@dataclass(frozen=True)
class StrokeSubset:
    """A view of some strokes of a parent set; parameters are shared.

    Gradients computed for a subset are reported in the parent's full theta
    layout, so contributions from several subsets can be summed directly.
    """

    parent: StrokeSet
    indices: tuple[int, ...]

    def __post_init__(self) -> None:
        idx = tuple(int(i) for i in self.indices)
        for i in idx:
            if not (0 <= i < self.parent.n):
                raise ValueError(f"stroke index {i} out of range for N={self.parent.n}")
        object.__setattr__(self, "indices", idx)

    @property
    def strokes(self) -> tuple[CubicBezier, ...]:
        return tuple(self.parent.strokes[i] for i in self.indices)

    @property
    def n(self) -> int:
        return len(self.indices)


Strokes = Union[StrokeSet, StrokeSubset]


def as_subset(strokes: Strokes) -> tuple[StrokeSet, tuple[int, ...]]:
    """Normalize a StrokeSet or StrokeSubset to (parent, global indices)."""
    if isinstance(strokes, StrokeSubset):
        return strokes.parent, strokes.indices
    return strokes, tuple(range(strokes.n))


@dataclass(frozen=True)
class PhasePlan:
    """K prompts plus cumulative stroke boundaries k_1 < ... < k_K = N."""

    boundaries: tuple[int, ...]
    prompts: tuple[str, ...]

    def __post_init__(self) -> None:
        bounds = tuple(int(b) for b in self.boundaries)
        prompts = tuple(self.prompts)
        if len(bounds) < 2:
            raise ValueError("a phase plan needs at least two phases")
        if len(bounds) != len(prompts):
            raise ValueError(
                f"{len(prompts)} prompts for {len(bounds)} boundaries"
            )
        if bounds[0] < 1:
            raise ValueError("boundaries must be >= 1")
        if any(b >= a for b, a in zip(bounds, bounds[1:])):
            raise ValueError("boundaries must be strictly increasing")
        object.__setattr__(self, "boundaries", bounds)
        object.__setattr__(self, "prompts", prompts)

    @property
    def num_phases(self) -> int:
        return len(self.boundaries)

    @property
    def total_strokes(self) -> int:
        return self.boundaries[-1]

    def check_stroke_count(self, n: int) -> None:
        if self.total_strokes != n:
            raise ValueError(
                f"plan covers {self.total_strokes} strokes but the set has {n}"
            )

    def cumulative_indices(self, phase: int) -> tuple[int, ...]:
        """Global stroke indices of cumulative phase ``phase`` (1-based)."""
        self._check_phase(phase)
        return tuple(range(self.boundaries[phase - 1]))

    def delta_indices(self, phase: int) -> tuple[int, ...]:
        """Global stroke indices of the disjoint subset added at ``phase``."""
        self._check_phase(phase)
        lo = 0 if phase == 1 else self.boundaries[phase - 2]
        return tuple(range(lo, self.boundaries[phase - 1]))

    def _check_phase(self, phase: int) -> None:
        if not (1 <= phase <= self.num_phases):
            raise ValueError(
                f"phase index {phase} out of range 1..{self.num_phases}"
            )


def cumulative_subset(strokes: StrokeSet, plan: PhasePlan, phase: int) -> StrokeSubset:
    """The first k_phase strokes as a parameter-sharing view (phase is 1-based)."""
    plan.check_stroke_count(strokes.n)
    return StrokeSubset(strokes, plan.cumulative_indices(phase))


def delta_subset(strokes: StrokeSet, plan: PhasePlan, phase: int) -> StrokeSubset:
    """The strokes added at ``phase`` only, as a parameter-sharing view."""
    plan.check_stroke_count(strokes.n)
    return StrokeSubset(strokes, plan.delta_indices(phase))
