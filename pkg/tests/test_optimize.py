import numpy as np
import pytest

from phasesketch.geometry import PhasePlan, cumulative_subset, delta_subset
from phasesketch.guidance import GuidanceRequest, GuidanceResponse, TargetMatchProvider
from phasesketch.losses import OverlayConfig, overlay_loss
from phasesketch.optimize import (
    AdamState,
    OptimizeConfig,
    OptimizeError,
    adam_step,
    init_strokes,
    optimize,
)
from phasesketch.raster import RenderConfig, render, render_vjp

SMALL_RENDER = RenderConfig(resolution=48, samples_per_curve=12)


def small_cfg(**kw):
    defaults = dict(
        iterations=50,
        learning_rate=0.01,
        seed=11,
        init_radius=0.25,
        stroke_width=0.015,
        render=SMALL_RENDER,
        overlay=OverlayConfig(blur_sigma=1.5, lambda_overlay=0.1),
        snapshot_every=10,
    )
    defaults.update(kw)
    return OptimizeConfig(**defaults)


TWO_PHASE = PhasePlan((4, 8), ("first", "second"))


class TestInitStrokes:
    def test_centered_stays_within_radius_plus_slack(self):
        cfg = small_cfg(init_strategy="centered", init_radius=0.2)
        s = init_strokes(16, PhasePlan((8, 16), ("a", "b")), cfg)
        pts = s.control_points().reshape(-1, 2)
        dist = np.linalg.norm(pts - 0.5, axis=1)
        assert dist.max() <= 0.2 + cfg.init_walk_slack

    def test_same_seed_reproduces(self):
        cfg = small_cfg(seed=99)
        a = init_strokes(8, TWO_PHASE, cfg)
        b = init_strokes(8, TWO_PHASE, cfg)
        assert np.array_equal(a.flatten(), b.flatten())

    def test_scattered_mean_near_center(self):
        plan = PhasePlan((5000, 10000), ("a", "b"))
        cfg = small_cfg(init_strategy="scattered")
        s = init_strokes(10000, plan, cfg)
        anchors = s.control_points()[:, 0, :]
        assert np.all(np.abs(anchors.mean(axis=0) - 0.5) < 0.05)

    def test_shifted_moves_the_disk(self):
        cfg = small_cfg(init_strategy="shifted", init_offset=(0.15, 0.15))
        s = init_strokes(8, TWO_PHASE, cfg)
        anchors = s.control_points()[:, 0, :]
        assert np.all(
            np.linalg.norm(anchors - np.array([0.65, 0.65]), axis=1)
            <= cfg.init_radius + 1e-12
        )

    def test_disk_fully_outside_rejected(self):
        cfg = small_cfg(init_strategy="shifted", init_offset=(2.0, 2.0))
        with pytest.raises(ValueError):
            init_strokes(8, TWO_PHASE, cfg)

    def test_too_few_strokes_rejected(self):
        with pytest.raises(ValueError):
            init_strokes(1, TWO_PHASE, small_cfg())

    def test_strategy_validated(self):
        with pytest.raises(ValueError):
            small_cfg(init_strategy="spiral")


def reference_adam(theta, grads, m, v, t, lr, b1, b2, eps):
    out = np.empty_like(theta)
    m2, v2 = np.empty_like(m), np.empty_like(v)
    for i in range(theta.size):
        m2[i] = b1 * m[i] + (1 - b1) * grads[i]
        v2[i] = b2 * v[i] + (1 - b2) * grads[i] ** 2
        mh = m2[i] / (1 - b1**t)
        vh = v2[i] / (1 - b2**t)
        out[i] = theta[i] - lr * mh / (np.sqrt(vh) + eps)
    return out, m2, v2


class TestAdam:
    def test_zero_gradient_keeps_theta(self):
        cfg = small_cfg()
        theta = np.array([1.0, -2.0])
        state = AdamState(np.zeros(2), np.array([0.2, 0.2]), t=3)
        theta2, state2 = adam_step(theta, np.zeros(2), state, cfg)
        assert np.array_equal(theta2, theta)
        assert np.all(state2.v < state.v)  # moments decay toward zero

    def test_first_step_magnitude(self):
        cfg = small_cfg(learning_rate=0.01, adam_eps=1e-12)
        theta, _ = adam_step(np.zeros(1), np.array([2.0]), AdamState.zeros(1), cfg)
        assert theta[0] == pytest.approx(-0.01, abs=1e-8)

    def test_equal_gradients_update_equally(self):
        cfg = small_cfg()
        theta, _ = adam_step(
            np.zeros(2), np.array([0.3, 0.3]), AdamState.zeros(2), cfg
        )
        assert theta[0] == theta[1]

    def test_matches_reference_implementation(self, rng):
        cfg = small_cfg(learning_rate=0.07)
        theta = rng.standard_normal(40)
        state = AdamState.zeros(40)
        for t in range(1, 6):
            grads = rng.standard_normal(40)
            ref, m_ref, v_ref = reference_adam(
                theta,
                grads,
                state.m,
                state.v,
                t,
                cfg.learning_rate,
                cfg.adam_beta1,
                cfg.adam_beta2,
                cfg.adam_eps,
            )
            theta, state = adam_step(theta, grads, state, cfg)
            assert np.max(np.abs(theta - ref)) < 1e-12
            assert np.max(np.abs(state.m - m_ref)) < 1e-12
            assert np.max(np.abs(state.v - v_ref)) < 1e-12

    def test_non_finite_gradients_abort(self):
        cfg = small_cfg()
        with pytest.raises(OptimizeError):
            adam_step(np.zeros(2), np.array([1.0, np.nan]), AdamState.zeros(2), cfg)


class ZeroProvider:
    def gradient(self, req: GuidanceRequest) -> GuidanceResponse:
        return GuidanceResponse(np.zeros_like(req.image), 0.0, "zero")


class NanProvider:
    def gradient(self, req: GuidanceRequest) -> GuidanceResponse:
        grad = np.zeros_like(req.image)
        resp = GuidanceResponse(grad, 0.0, "nan")
        object.__setattr__(resp, "grad_image", grad + np.nan)
        return resp


class TestOptimize:
    def test_missing_provider_rejected(self):
        with pytest.raises(ValueError, match="second"):
            optimize(TWO_PHASE, {"first": ZeroProvider()}, small_cfg())

    def test_trace_snapshot_structure(self):
        providers = {p: ZeroProvider() for p in TWO_PHASE.prompts}
        cfg = small_cfg(iterations=25, snapshot_every=10, overlay=OverlayConfig(lambda_overlay=0.0))
        trace = optimize(TWO_PHASE, providers, cfg)
        iters = [s.iteration for s in trace.snapshots]
        assert iters == [10, 20, 25]  # strictly increasing, final included
        assert all(len(s.branch_diags) == 2 for s in trace.snapshots)
        assert all(len(s.overlay_losses) == 1 for s in trace.snapshots)

    def test_non_finite_guidance_aborts_with_branch_name(self):
        providers = {"first": ZeroProvider(), "second": NanProvider()}
        with pytest.raises(OptimizeError, match="branch 2"):
            optimize(TWO_PHASE, providers, small_cfg(iterations=2))

    def test_convex_sanity_converges_toward_blank(self):
        # both branches pull toward an all-zero target; windowed loss means
        # must decrease as strokes shrink or leave the canvas
        res = SMALL_RENDER.resolution
        blank = np.zeros((res, res))
        providers = {p: TargetMatchProvider(blank) for p in TWO_PHASE.prompts}
        cfg = small_cfg(
            iterations=400,
            learning_rate=0.04,
            snapshot_every=1,
            overlay=OverlayConfig(blur_sigma=1.5, lambda_overlay=0.0),
        )
        trace = optimize(TWO_PHASE, providers, cfg)
        diag = np.array([s.branch_diags[1] for s in trace.snapshots])
        windows = diag.reshape(4, 100).mean(axis=1)
        assert np.all(np.diff(windows) < 0)
        assert diag[-1] < 0.4 * diag[0]
        assert render(trace.final_set, cfg.render).mean() < 0.03

    def test_determinism_bitwise(self):
        res = SMALL_RENDER.resolution
        tgt = np.zeros((res, res))
        tgt[10:20, 10:30] = 1.0
        providers = {p: TargetMatchProvider(tgt) for p in TWO_PHASE.prompts}
        cfg = small_cfg(iterations=30)
        t1 = optimize(TWO_PHASE, providers, cfg)
        t2 = optimize(TWO_PHASE, providers, cfg)
        assert np.array_equal(t1.final_theta, t2.final_theta)
        assert [s.total_loss for s in t1.snapshots] == [
            s.total_loss for s in t2.snapshots
        ]


class TestGradientRouting:
    def branch_vjps(self, rng):
        """Per-branch theta gradients computed independently."""
        plan = TWO_PHASE
        cfg = small_cfg()
        strokes = init_strokes(8, plan, cfg)
        g1 = rng.standard_normal((48, 48))
        g2 = rng.standard_normal((48, 48))
        v1 = render_vjp(cumulative_subset(strokes, plan, 1), cfg.render, g1)
        v2 = render_vjp(cumulative_subset(strokes, plan, 2), cfg.render, g2)
        return strokes, v1, v2

    def test_delta_strokes_get_nothing_from_earlier_branches(self, rng):
        strokes, v1, _ = self.branch_vjps(rng)
        per = strokes.params_per_stroke
        assert np.all(v1[4 * per :] == 0.0)

    def test_prefix_gradient_superposition(self, rng):
        # summing independently computed branch contributions must equal the
        # jointly accumulated gradient
        plan = TWO_PHASE
        cfg = small_cfg(overlay=OverlayConfig(blur_sigma=0.0, lambda_overlay=0.0))
        strokes = init_strokes(8, plan, cfg)
        g1 = rng.standard_normal((48, 48))
        g2 = rng.standard_normal((48, 48))

        from phasesketch.raster import composite_vjp, coverage_vjp, stroke_coverage

        stack = stroke_coverage(strokes, cfg.render)
        acc = np.zeros_like(stack.maps)
        composite_vjp(stack, g1, plan.cumulative_indices(1), out=acc)
        composite_vjp(stack, g2, plan.cumulative_indices(2), out=acc)
        joint = coverage_vjp(stack, acc)

        v1 = render_vjp(cumulative_subset(strokes, plan, 1), cfg.render, g1)
        v2 = render_vjp(cumulative_subset(strokes, plan, 2), cfg.render, g2)
        assert np.max(np.abs(joint - (v1 + v2))) < 1e-6

    def test_zeroed_full_branch_leaves_only_overlay_on_delta(self):
        # with the full-branch gradient zeroed, delta strokes receive
        # gradient only through the overlay penalty
        plan = TWO_PHASE
        cfg = small_cfg(overlay=OverlayConfig(blur_sigma=1.5, lambda_overlay=0.1))
        strokes = init_strokes(8, plan, cfg)

        from phasesketch.raster import composite, stroke_coverage

        stack = stroke_coverage(strokes, cfg.render)
        img_prefix = composite(stack, plan.cumulative_indices(1))
        img_delta = composite(stack, plan.delta_indices(2))
        ov = overlay_loss(img_prefix, img_delta, cfg.overlay)

        per = strokes.params_per_stroke
        delta_view = delta_subset(strokes, plan, 2)
        only_overlay = render_vjp(delta_view, cfg.render, 0.1 * ov.grad_delta)
        assert np.any(only_overlay[4 * per :] != 0.0)
        assert np.all(only_overlay[: 4 * per] == 0.0)
