"""Overlay loss and total-objective assembly.

The overlay loss measures normalized overlap between two blurred subset
renders:

    L = 2 <Bp, Bd> / (|Bp|_1 + |Bd|_1 + eps),   B* = gaussian_blur(*, sigma)

The blur widens each subset's footprint into a soft spatial buffer, so the
penalty pushes newly added strokes to keep their distance from the strokes
they extend instead of crowding them. Both inputs must be the two subsets
rendered separately (not cumulative composites), otherwise the overlap of
interest is already baked into one image.

The total objective for K phases is

    L_total = sum_i L_branch_i + sum_{i<K} lambda_i * L_overlay_i,

where overlay term i pairs "cumulative phases 1..i" with "the strokes
added at phase i+1" only; there is no all-pairs penalty.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .raster import InkImage, blur_vjp, gaussian_blur

DEFAULT_LAMBDA_OVERLAY = 0.1


@dataclass(frozen=True)
class OverlayConfig:
    """Overlay penalty settings.

    ``blur_sigma`` is in pixels at the render resolution; the default of 4
    assumes the 224 guidance resolution and should be scaled with it.
    ``lambda_overlay`` is a scalar applied to every boundary, or one weight
    per boundary (K-1 values).
    """

    blur_sigma: float = 4.0
    lambda_overlay: float | tuple[float, ...] = DEFAULT_LAMBDA_OVERLAY
    epsilon: float = 1e-8

    def __post_init__(self) -> None:
        if self.blur_sigma < 0:
            raise ValueError(f"blur_sigma must be >= 0, got {self.blur_sigma}")
        lam = self.lambda_overlay
        lams = (lam,) if np.isscalar(lam) else tuple(lam)
        if any(v < 0 for v in lams):
            raise ValueError(f"lambda_overlay must be >= 0, got {lam}")
        if not (self.epsilon > 0):
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")

    def lambdas(self, num_boundaries: int) -> tuple[float, ...]:
        """Per-boundary weights, broadcast from a scalar if needed."""
        lam = self.lambda_overlay
        if np.isscalar(lam):
            return (float(lam),) * num_boundaries
        lams = tuple(float(v) for v in lam)
        if len(lams) != num_boundaries:
            raise ValueError(
                f"{len(lams)} overlay weights for {num_boundaries} phase boundaries"
            )
        return lams


@dataclass(frozen=True)
class OverlayResult:
    loss: float
    grad_prefix: InkImage  # d loss / d unblurred prefix image
    grad_delta: InkImage  # d loss / d unblurred delta image


def overlay_loss(
    prefix_img: InkImage, delta_img: InkImage, cfg: OverlayConfig
) -> OverlayResult:
    """Normalized blurred-overlap penalty between two subset renders.

    Returns the scalar loss and exact gradients with respect to the
    *unblurred* inputs (the blur adjoint is chained in here). Symmetric in
    its two images, bitwise.
    """
    prefix_img = np.asarray(prefix_img, dtype=np.float64)
    delta_img = np.asarray(delta_img, dtype=np.float64)
    if prefix_img.shape != delta_img.shape:
        raise ValueError(
            f"image shapes differ: {prefix_img.shape} vs {delta_img.shape}"
        )
    bp = gaussian_blur(prefix_img, cfg.blur_sigma)
    bd = gaussian_blur(delta_img, cfg.blur_sigma)
    inner = float(np.sum(bp * bd))
    denom = float(np.sum(bp) + np.sum(bd) + cfg.epsilon)
    if denom == 0.0:  # only reachable with all-zero images and epsilon ~ 0
        zero = np.zeros_like(prefix_img)
        return OverlayResult(0.0, zero, zero.copy())
    loss = 2.0 * inner / denom
    # d loss / d blurred prefix = (2 * bd - loss) / denom, and symmetrically
    g_bp = (2.0 * bd - loss) / denom
    g_bd = (2.0 * bp - loss) / denom
    return OverlayResult(
        loss,
        blur_vjp(g_bp, cfg.blur_sigma),
        blur_vjp(g_bd, cfg.blur_sigma),
    )


@dataclass(frozen=True)
class TotalLoss:
    """Assembled objective: scalar plus image-space gradients per render.

    ``branch_grads[i]`` applies to the cumulative render of phase i+1;
    ``delta_grads[j]`` applies to the delta-only render of phase j+2 (the
    second half of overlay pair j). Overlay weights are already folded in.
    """

    total: float
    branch_losses: tuple[float, ...]
    overlay_losses: tuple[float, ...]
    branch_grads: tuple[InkImage, ...]
    delta_grads: tuple[InkImage, ...]


def total_loss(
    branch_losses,
    branch_image_grads,
    overlay_terms: list[OverlayResult] | tuple[OverlayResult, ...],
    cfg: OverlayConfig,
) -> TotalLoss:
    """Combine per-phase branch losses with weighted overlay penalties.

    ``overlay_terms[i]`` must pair the cumulative render of phase i+1 with
    the delta-only render of phase i+2. Gradient assembly adds each overlay
    term's prefix gradient onto the matching cumulative branch gradient and
    emits the delta gradients separately.
    """
    branch_losses = tuple(float(v) for v in branch_losses)
    k = len(branch_losses)
    if k < 2:
        raise ValueError(f"need at least 2 phases, got {k}")
    if len(branch_image_grads) != k:
        raise ValueError(
            f"{len(branch_image_grads)} branch gradients for {k} branches"
        )
    if len(overlay_terms) != k - 1:
        raise ValueError(
            f"{len(overlay_terms)} overlay terms for {k} phases (need K-1)"
        )
    lams = cfg.lambdas(k - 1)
    overlay_values = tuple(term.loss for term in overlay_terms)
    total = sum(branch_losses) + sum(
        lam * lv for lam, lv in zip(lams, overlay_values)
    )
    branch_grads = [np.array(g, dtype=np.float64, copy=True) for g in branch_image_grads]
    delta_grads = []
    for i, (lam, term) in enumerate(zip(lams, overlay_terms)):
        branch_grads[i] = branch_grads[i] + lam * term.grad_prefix
        delta_grads.append(lam * term.grad_delta)
    return TotalLoss(
        float(total),
        branch_losses,
        overlay_values,
        tuple(branch_grads),
        tuple(delta_grads),
    )
