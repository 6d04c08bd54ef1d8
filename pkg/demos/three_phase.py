"""Three-phase run: the same machinery with K cumulative branches.

Strokes are split 10 / 10 / 12. Phase 1 targets a disk on the left, phase 2
adds a bar, phase 3 closes the composition with a triangle. Each boundary
gets its own overlay penalty between the cumulative sketch and the strokes
the next phase adds, so every reveal stays spatially clean.
"""

from pathlib import Path

from phasesketch import (
    OptimizeConfig,
    OverlayConfig,
    PhasePlan,
    RenderConfig,
    TargetMatchProvider,
    cumulative_subset,
    export_svg,
    optimize,
    render,
    save_png,
)
from phasesketch.targets import build_target

out = Path(__file__).parent / "out" / "three_phase"
out.mkdir(parents=True, exist_ok=True)

RES = 96
disk = {"kind": "disk", "cx": 0.3, "cy": 0.42, "r": 0.17}
bar = {"kind": "rect", "x0": 0.44, "y0": 0.58, "x1": 0.9, "y1": 0.7}
tri = {"kind": "triangle", "vertices": [[0.56, 0.44], [0.88, 0.44], [0.72, 0.14]]}

shapes = {
    "one": disk,
    "two": {"kind": "union", "parts": [disk, bar]},
    "three": {"kind": "union", "parts": [disk, bar, tri]},
}

plan = PhasePlan(boundaries=(10, 20, 32), prompts=("one", "two", "three"))
providers = {k: TargetMatchProvider(build_target(v, RES)) for k, v in shapes.items()}

cfg = OptimizeConfig(
    iterations=600,
    learning_rate=0.01,
    seed=3,
    init_radius=0.3,
    stroke_width=0.012,
    render=RenderConfig(resolution=RES, softness_sigma=2.0 / RES, samples_per_curve=24),
    overlay=OverlayConfig(blur_sigma=2.0, lambda_overlay=0.1),  # one weight per boundary also works
    snapshot_every=100,
)

print("optimizing 32 strokes across three branches ...")
trace = optimize(plan, providers, cfg)

for i in (1, 2, 3):
    subset = cumulative_subset(trace.final_set, plan, i)
    save_png(render(subset, cfg.render), out / f"phase_{i}.png")
    (out / f"phase_{i}.svg").write_text(export_svg(subset))

last = trace.snapshots[-1]
print("final branch diagnostics:", [round(v, 4) for v in last.branch_diags])
print("final overlay penalties:", [round(v, 4) for v in last.overlay_losses])
print(f"phase images and SVGs in {out}")
