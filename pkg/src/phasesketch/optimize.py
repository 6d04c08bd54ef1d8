"""Joint optimization loop over all cumulative phase branches.

Every iteration renders each cumulative prefix once, asks its guidance
provider for an image-space gradient, adds the weighted overlay penalties
between consecutive subsets, and chains everything through the rasterizer
VJP into a single gradient on the shared parameter vector. Strokes that
appear in several branches accumulate gradients from all of them; strokes
added at a later phase receive nothing from earlier branches (they are not
rendered there).

Per-stroke coverage maps are rasterized once per iteration and reused by
every composite (K cumulative branches plus K-1 delta-only renders) and by
the shared backward pass.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.typing import NDArray

from .geometry import (
    DEFAULT_OPACITY,
    DEFAULT_WIDTH,
    CubicBezier,
    PhasePlan,
    StrokeSet,
)
from .guidance import DEFAULT_GUIDANCE_SCALE, GuidanceRequest
from .losses import OverlayConfig, overlay_loss, total_loss
from .raster import (
    RenderConfig,
    composite,
    composite_vjp,
    coverage_vjp,
    save_png,
    stroke_coverage,
)

INIT_STRATEGIES = ("centered", "scattered", "shifted")

# Total random-walk slack per stroke: each of the three steps moves at most
# a third of this, so no control point strays further than init_walk_slack
# from its stroke's anchor.
DEFAULT_WALK_SLACK = 0.05


class OptimizeError(RuntimeError):
    """A run aborted (non-finite loss or gradients)."""


@dataclass(frozen=True)
class OptimizeConfig:
    iterations: int = 2000
    learning_rate: float = 0.01  # control points, canvas units per unit step
    aux_learning_rate: float = 0.01  # width/opacity when learnable
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    init_strategy: str = "centered"
    init_radius: float = 0.2
    init_offset: tuple[float, float] = (0.15, 0.15)  # used by "shifted"
    init_walk_slack: float = DEFAULT_WALK_SLACK
    stroke_width: float = DEFAULT_WIDTH
    stroke_opacity: float = DEFAULT_OPACITY
    learn_width: bool = False
    learn_opacity: bool = False
    guidance_scale: float = DEFAULT_GUIDANCE_SCALE
    render: RenderConfig = field(default_factory=RenderConfig)
    overlay: OverlayConfig = field(default_factory=OverlayConfig)
    snapshot_every: int = 100

    def __post_init__(self) -> None:
        if self.iterations < 1:
            raise ValueError(f"iterations must be >= 1, got {self.iterations}")
        if not (self.learning_rate > 0):
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        for name in ("adam_beta1", "adam_beta2"):
            b = getattr(self, name)
            if not (0.0 <= b < 1.0):
                raise ValueError(f"{name} must be in [0, 1), got {b}")
        if self.init_strategy not in INIT_STRATEGIES:
            raise ValueError(
                f"init_strategy must be one of {INIT_STRATEGIES}, "
                f"got {self.init_strategy!r}"
            )
        if not (self.init_radius > 0):
            raise ValueError(f"init_radius must be > 0, got {self.init_radius}")
        if self.snapshot_every < 1:
            raise ValueError(f"snapshot_every must be >= 1, got {self.snapshot_every}")


def _disk_point(rng: np.random.Generator, center, radius: float) -> NDArray:
    r = radius * math.sqrt(rng.uniform())
    ang = rng.uniform(0.0, 2.0 * math.pi)
    return np.asarray(center, dtype=np.float64) + r * np.array(
        [math.cos(ang), math.sin(ang)]
    )


def init_strokes(n: int, plan: PhasePlan, cfg: OptimizeConfig) -> StrokeSet:
    """Seeded stroke initialization.

    Anchors (p0) are placed per strategy: "centered" draws uniformly from a
    disk of init_radius around the canvas center, "shifted" from the same
    disk moved by init_offset, "scattered" uniformly over the whole canvas.
    The remaining control points follow a short random walk from the anchor
    so initial strokes are short and local, which keeps early ink density
    high where the strokes land.
    """
    if n < plan.num_phases:
        raise ValueError(f"need at least {plan.num_phases} strokes, got {n}")
    plan.check_stroke_count(n)
    center = np.array([0.5, 0.5])
    if cfg.init_strategy == "shifted":
        center = center + np.asarray(cfg.init_offset, dtype=np.float64)
        if (
            center[0] + cfg.init_radius < 0.0
            or center[0] - cfg.init_radius > 1.0
            or center[1] + cfg.init_radius < 0.0
            or center[1] - cfg.init_radius > 1.0
        ):
            raise ValueError(
                f"shifted init disk at {tuple(center)} lies fully outside the canvas"
            )
    rng = np.random.default_rng(cfg.seed)
    step = cfg.init_walk_slack / 3.0
    strokes = []
    for _ in range(n):
        if cfg.init_strategy == "scattered":
            p = rng.uniform(0.0, 1.0, size=2)
        else:
            p = _disk_point(rng, center, cfg.init_radius)
        pts = [p]
        for _ in range(3):
            p = p + (_disk_point(rng, (0.0, 0.0), step))
            pts.append(p)
        strokes.append(
            CubicBezier(
                np.stack(pts), width=cfg.stroke_width, opacity=cfg.stroke_opacity
            )
        )
    return StrokeSet(
        tuple(strokes), learn_width=cfg.learn_width, learn_opacity=cfg.learn_opacity
    )


@dataclass
class AdamState:
    m: NDArray[np.float64]
    v: NDArray[np.float64]
    t: int = 0

    @classmethod
    def zeros(cls, size: int) -> "AdamState":
        return cls(np.zeros(size), np.zeros(size))


def adam_step(
    theta: NDArray[np.float64],
    grads: NDArray[np.float64],
    state: AdamState,
    cfg: OptimizeConfig,
    lr_scale: NDArray[np.float64] | None = None,
) -> tuple[NDArray[np.float64], AdamState]:
    """One bias-corrected Adam update; returns (new theta, new state).

    ``lr_scale`` optionally rescales the learning rate per parameter (used
    to give width/opacity their own rate).
    """
    theta = np.asarray(theta, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    if theta.shape != grads.shape or theta.shape != state.m.shape:
        raise ValueError(
            f"shape mismatch: theta {theta.shape}, grads {grads.shape}, "
            f"state {state.m.shape}"
        )
    if not np.all(np.isfinite(grads)):
        raise OptimizeError("non-finite gradients passed to adam_step")
    t = state.t + 1
    m = cfg.adam_beta1 * state.m + (1.0 - cfg.adam_beta1) * grads
    v = cfg.adam_beta2 * state.v + (1.0 - cfg.adam_beta2) * grads**2
    m_hat = m / (1.0 - cfg.adam_beta1**t)
    v_hat = v / (1.0 - cfg.adam_beta2**t)
    lr = cfg.learning_rate if lr_scale is None else cfg.learning_rate * lr_scale
    theta_new = theta - lr * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)
    return theta_new, AdamState(m, v, t)


def _lr_scale(strokes: StrokeSet, cfg: OptimizeConfig) -> NDArray[np.float64] | None:
    """Per-parameter learning-rate multipliers (aux rate for width/opacity)."""
    if not (strokes.learn_width or strokes.learn_opacity):
        return None
    per = [1.0] * 8
    aux = cfg.aux_learning_rate / cfg.learning_rate
    if strokes.learn_width:
        per.append(aux)
    if strokes.learn_opacity:
        per.append(aux)
    return np.tile(np.array(per), strokes.n)


@dataclass(frozen=True)
class Snapshot:
    iteration: int  # 1-based; parameters are post-update for that iteration
    theta: NDArray[np.float64]
    branch_diags: tuple[float, ...]
    overlay_losses: tuple[float, ...]
    total_loss: float


@dataclass
class RunTrace:
    plan: PhasePlan
    config: OptimizeConfig
    snapshots: list[Snapshot]
    final_set: StrokeSet

    @property
    def final_theta(self) -> NDArray[np.float64]:
        return self.snapshots[-1].theta


def optimize(plan: PhasePlan, providers: dict, cfg: OptimizeConfig) -> RunTrace:
    """Run the joint loop; returns the trace with the final stroke set.

    ``providers`` maps each prompt id in the plan to an object with a
    ``gradient(GuidanceRequest) -> GuidanceResponse`` method. Transport
    failures surface from the provider; non-finite losses or gradients
    abort with a diagnostic naming the branch.
    """
    missing = [p for p in plan.prompts if p not in providers]
    if missing:
        raise ValueError(f"no provider for prompts: {missing}")

    base = init_strokes(plan.total_strokes, plan, cfg)
    k_phases = plan.num_phases
    theta = base.flatten()
    state = AdamState.zeros(theta.size)
    lr_scale = _lr_scale(base, cfg)
    snapshots: list[Snapshot] = []

    for it in range(1, cfg.iterations + 1):
        current = base.with_flat_params(theta)
        stack = stroke_coverage(current, cfg.render)

        branch_images = [
            composite(stack, plan.cumulative_indices(i))
            for i in range(1, k_phases + 1)
        ]
        branch_grads = []
        branch_diags = []
        for i, img in enumerate(branch_images, start=1):
            prompt = plan.prompts[i - 1]
            resp = providers[prompt].gradient(
                GuidanceRequest(
                    branch_index=i,
                    step=it,
                    prompt_id=prompt,
                    image=np.clip(img, 0.0, 1.0),
                    guidance_scale=cfg.guidance_scale,
                )
            )
            if not np.all(np.isfinite(resp.grad_image)):
                raise OptimizeError(
                    f"non-finite guidance gradient in branch {i} "
                    f"(prompt {prompt!r}) at iteration {it}"
                )
            branch_grads.append(resp.grad_image)
            branch_diags.append(float(resp.scalar_diag))

        delta_images = [
            composite(stack, plan.delta_indices(i)) for i in range(2, k_phases + 1)
        ]
        overlay_terms = [
            overlay_loss(branch_images[i], delta_images[i], cfg.overlay)
            for i in range(k_phases - 1)
        ]

        assembled = total_loss(branch_diags, branch_grads, overlay_terms, cfg.overlay)
        if not math.isfinite(assembled.total):
            raise OptimizeError(f"non-finite total loss at iteration {it}")

        cov_grads = np.zeros_like(stack.maps)
        for i in range(k_phases):
            composite_vjp(
                stack,
                assembled.branch_grads[i],
                plan.cumulative_indices(i + 1),
                out=cov_grads,
            )
        for j in range(k_phases - 1):
            composite_vjp(
                stack,
                assembled.delta_grads[j],
                plan.delta_indices(j + 2),
                out=cov_grads,
            )
        theta_grad = coverage_vjp(stack, cov_grads)
        if not np.all(np.isfinite(theta_grad)):
            raise OptimizeError(f"non-finite parameter gradient at iteration {it}")

        theta, state = adam_step(theta, theta_grad, state, cfg, lr_scale)

        if it % cfg.snapshot_every == 0 or it == cfg.iterations:
            snapshots.append(
                Snapshot(
                    iteration=it,
                    theta=theta.copy(),
                    branch_diags=tuple(branch_diags),
                    overlay_losses=assembled.overlay_losses,
                    total_loss=assembled.total,
                )
            )

    final_set = base.with_flat_params(theta)
    return RunTrace(plan, cfg, snapshots, final_set)


# --- trace serialization ------------------------------------------------------


def _dump_json(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, sort_keys=True, indent=1) + "\n")


def stroke_set_to_dict(strokes: StrokeSet) -> dict:
    return {
        "points": [s.points.tolist() for s in strokes.strokes],
        "width": [s.width for s in strokes.strokes],
        "opacity": [s.opacity for s in strokes.strokes],
        "learn_width": strokes.learn_width,
        "learn_opacity": strokes.learn_opacity,
    }


def stroke_set_from_dict(data: dict) -> StrokeSet:
    strokes = tuple(
        CubicBezier(np.asarray(pts), width=w, opacity=o)
        for pts, w, o in zip(data["points"], data["width"], data["opacity"])
    )
    return StrokeSet(
        strokes,
        learn_width=bool(data.get("learn_width", False)),
        learn_opacity=bool(data.get("learn_opacity", False)),
    )


def save_trace(
    trace: RunTrace, run_dir, base_set: StrokeSet | None = None, previews: bool = False
) -> None:
    """Write trace.json, per-snapshot theta_<iter>.json and optional previews.

    trace.json carries only scalars and is byte-deterministic for a fixed
    config and seed (no timestamps, sorted keys).
    """
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    template = base_set if base_set is not None else trace.final_set
    scalars = {
        "prompts": list(trace.plan.prompts),
        "boundaries": list(trace.plan.boundaries),
        "iterations": trace.config.iterations,
        "seed": trace.config.seed,
        "snapshots": [
            {
                "iteration": s.iteration,
                "total_loss": s.total_loss,
                "branch_diag": list(s.branch_diags),
                "overlay": list(s.overlay_losses),
            }
            for s in trace.snapshots
        ],
    }
    _dump_json(scalars, run_dir / "trace.json")
    for s in trace.snapshots:
        snap_set = template.with_flat_params(s.theta)
        _dump_json(
            {"iteration": s.iteration, **stroke_set_to_dict(snap_set)},
            run_dir / f"theta_{s.iteration:05d}.json",
        )
    _dump_json(stroke_set_to_dict(trace.final_set), run_dir / "theta_final.json")
    if previews:
        for i in range(1, trace.plan.num_phases + 1):
            img = composite(
                stroke_coverage(trace.final_set, trace.config.render),
                trace.plan.cumulative_indices(i),
            )
            save_png(img, run_dir / f"phase_{i}.png")


def load_stroke_set(path) -> StrokeSet:
    return stroke_set_from_dict(json.loads(Path(path).read_text()))
