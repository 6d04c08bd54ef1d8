"""Walk through the stroke renderer: strokes in, soft ink out.

Builds a handful of cubic strokes by hand, renders them at two resolutions,
and shows what the Gaussian blur used by the overlay penalty does to the
ink map. Outputs land in demos/out/.
"""

from pathlib import Path

import numpy as np

from phasesketch import CubicBezier, RenderConfig, StrokeSet, gaussian_blur, render, save_png

out = Path(__file__).parent / "out"
out.mkdir(exist_ok=True)

# A stroke is four control points in the unit square (y points down),
# a half-thickness, and an opacity.
smile = CubicBezier(
    np.array([[0.3, 0.6], [0.4, 0.75], [0.6, 0.75], [0.7, 0.6]]), width=0.008
)
left_eye = CubicBezier(
    np.array([[0.35, 0.35], [0.37, 0.3], [0.4, 0.3], [0.42, 0.35]]), width=0.008
)
right_eye = CubicBezier(
    np.array([[0.58, 0.35], [0.6, 0.3], [0.63, 0.3], [0.65, 0.35]]), width=0.008
)
# opacity composites like translucent ink: 1 - prod(1 - coverage)
ghost = CubicBezier(
    np.array([[0.2, 0.2], [0.5, 0.1], [0.5, 0.9], [0.8, 0.8]]), width=0.01, opacity=0.35
)

face = StrokeSet((smile, left_eye, right_eye, ghost))

for res in (128, 512):
    img = render(face, RenderConfig(resolution=res))
    print(f"resolution {res}: ink in [{img.min():.3f}, {img.max():.3f}]")
    save_png(img, out / f"face_{res}.png")

# The overlay penalty never sees raw ink; it compares blurred "footprints".
img = render(face, RenderConfig(resolution=128))
for sigma in (0, 2, 6):
    save_png(gaussian_blur(img, sigma), out / f"face_blur_{sigma}.png")

print(f"wrote PNGs to {out}")
