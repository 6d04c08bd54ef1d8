"""How the overlay penalty scores spatial crowding between stroke groups.

Two groups of strokes are slid past each other; at each offset we render
them separately, blur both maps, and evaluate the normalized overlap.
The penalty is ~1 when the groups sit on top of each other and decays to 0
as the blurred footprints separate -- that decay zone is the "soft buffer"
that keeps later strokes from occluding earlier ones.
"""

from pathlib import Path

import numpy as np

from phasesketch import CubicBezier, OverlayConfig, RenderConfig, StrokeSet, overlay_loss, render, save_png

out = Path(__file__).parent / "out"
out.mkdir(exist_ok=True)

cfg = RenderConfig(resolution=128)
overlay_cfg = OverlayConfig(blur_sigma=4.0, lambda_overlay=0.1)


def vertical_strokes(x, n=4):
    strokes = []
    for i in range(n):
        y = 0.3 + 0.4 * i / (n - 1)
        strokes.append(
            CubicBezier(
                np.array([[x - 0.08, y], [x - 0.03, y], [x + 0.03, y], [x + 0.08, y]]),
                width=0.008,
            )
        )
    return StrokeSet(tuple(strokes))


prefix = vertical_strokes(0.35)
prefix_img = render(prefix, cfg)

print(f"{'offset':>8} {'overlap':>10}")
for i, offset in enumerate(np.linspace(0.0, 0.45, 10)):
    delta_img = render(vertical_strokes(0.35 + offset), cfg)
    result = overlay_loss(prefix_img, delta_img, overlay_cfg)
    print(f"{offset:8.3f} {result.loss:10.5f}")
    if i in (0, 4, 9):
        save_png(np.clip(prefix_img + delta_img, 0, 1), out / f"overlap_{i}.png")

print(f"wrote PNGs to {out}")
