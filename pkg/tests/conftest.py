import numpy as np
import pytest

from phasesketch.geometry import CubicBezier, StrokeSet


def random_stroke(rng, width=0.01, opacity=None, span=0.1):
    """A short random stroke away from the canvas border."""
    p0 = rng.uniform(0.2, 0.8, 2)
    pts = [p0]
    for _ in range(3):
        pts.append(pts[-1] + rng.uniform(-span, span, 2))
    if opacity is None:
        opacity = rng.uniform(0.3, 0.9)
    return CubicBezier(np.stack(pts), width=width, opacity=opacity)


def random_stroke_set(rng, n, learn_width=False, learn_opacity=False, **kw):
    return StrokeSet(
        tuple(random_stroke(rng, **kw) for _ in range(n)),
        learn_width=learn_width,
        learn_opacity=learn_opacity,
    )


def rel_err(a, b, floor=1e-6):
    return abs(a - b) / max(floor, abs(a), abs(b))


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
