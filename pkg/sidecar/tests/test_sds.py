"""SDS engine tests on the miniature latent model.

The model weights are toy-scale and random (seed-pinned), so these tests
pin down the engine's behavior -- seeding, annealing, classifier-free
guidance, the encoder chain, error contracts -- not sketch semantics.
Running against a real pretrained checkpoint changes only the weights.
"""

import numpy as np
import pytest
from fastapi.testclient import TestClient

from sketch_sidecar.app import create_app
from sketch_sidecar.protocol import decode_pixels, encode_pixels
from sketch_sidecar.sds import SDSEngine, TimestepPolicy, _request_seed
from sketch_sidecar.testing import TinyLatentModel

PROMPTS = {"circle": "a circle", "windmill": "a windmill"}


@pytest.fixture(scope="module")
def engine():
    return SDSEngine(model=TinyLatentModel(seed=3), prompts=PROMPTS, seed=42)


def page(seed=0, size=32):
    rng = np.random.default_rng(seed)
    return rng.uniform(0, 1, (size, size))


class TestDeterminism:
    def test_same_request_same_bytes(self, engine):
        img = page()
        a, diag_a, _ = engine.gradient(img, "circle", 1, 10, 100.0)
        b, diag_b, _ = engine.gradient(img, "circle", 1, 10, 100.0)
        assert a.tobytes() == b.tobytes()
        assert diag_a == diag_b

    def test_seed_policy_varies_with_step_and_prompt(self):
        seeds = {
            _request_seed(42, step, branch, prompt)
            for step in (1, 2)
            for branch in (1, 2)
            for prompt in ("circle", "windmill")
        }
        assert len(seeds) == 8

    def test_different_steps_differ(self, engine):
        img = page()
        a, _, _ = engine.gradient(img, "circle", 1, 10, 100.0)
        b, _, _ = engine.gradient(img, "circle", 1, 11, 100.0)
        assert not np.array_equal(a, b)


class TestCfgLinearity:
    def test_gradient_linear_in_guidance_scale(self, engine):
        # (t, eps) depend only on (seed, step, branch, prompt), so gradients
        # at different scales share everything but the CFG term
        img = page(1)
        g1, _, _ = engine.gradient(img, "circle", 1, 5, 1.0)
        g2, _, _ = engine.gradient(img, "circle", 1, 5, 2.0)
        g3, _, _ = engine.gradient(img, "circle", 1, 5, 3.0)
        step_a = g2 - g1
        step_b = g3 - g2
        # engine math runs in float32; linearity holds to that precision
        assert np.allclose(step_a, step_b, rtol=1e-4, atol=1e-6)
        assert np.max(np.abs(step_a)) > 0  # the conditional term is nonzero


class TestTimestepPolicy:
    def test_upper_bound_anneals(self):
        policy = TimestepPolicy(t_min=0.05, t_max=0.95, t_end=0.5, anneal_steps=100)
        assert policy.upper(0) == 0.95
        assert policy.upper(50) == pytest.approx(0.725)
        assert policy.upper(100) == 0.5
        assert policy.upper(10_000) == 0.5  # clamps past the schedule


class TestContracts:
    def test_unknown_prompt_rejected(self, engine):
        from sketch_sidecar.engine import UnknownPromptError

        with pytest.raises(UnknownPromptError):
            engine.gradient(page(), "unregistered", 1, 0, 1.0)

    def test_non_divisible_size_rejected(self, engine):
        with pytest.raises(ValueError, match="divisible"):
            engine.gradient(np.zeros((30, 30)), "circle", 1, 0, 1.0)

    def test_no_prompts_rejected(self):
        with pytest.raises(ValueError):
            SDSEngine(model=TinyLatentModel(), prompts={})

    def test_encoder_bypass_shapes(self):
        engine = SDSEngine(
            model=TinyLatentModel(seed=3),
            prompts=PROMPTS,
            seed=42,
            encoder_bypass=True,
        )
        grad, diag, _ = engine.gradient(page(), "circle", 1, 0, 10.0)
        assert grad.shape == (32, 32)
        assert np.all(np.isfinite(grad)) and np.isfinite(diag)


@pytest.fixture(scope="module")
def client():
    engine = SDSEngine(model=TinyLatentModel(seed=3), prompts=PROMPTS, seed=42)
    return TestClient(create_app(engine))


class TestSdsOverHttp:
    def test_health_mode(self, client):
        assert client.get("/v1/health").json() == {"status": "ok", "mode": "sds"}

    def test_gradient_round_trip(self, client):
        img = page(2)
        body = {
            "prompt_id": "circle",
            "branch_index": 1,
            "step": 3,
            "guidance_scale": 100.0,
            "width": 32,
            "height": 32,
            "pixels_b64": encode_pixels(img),
        }
        first = client.post("/v1/gradient", json=body)
        second = client.post("/v1/gradient", json=body)
        assert first.status_code == 200
        assert first.json()["grad_b64"] == second.json()["grad_b64"]  # pinned seed
        grad = decode_pixels(first.json()["grad_b64"], 32, 32)
        assert np.all(np.isfinite(grad))
        assert np.max(np.abs(grad)) > 0

    def test_unknown_prompt_is_400(self, client):
        body = {
            "prompt_id": "nope",
            "branch_index": 1,
            "step": 0,
            "guidance_scale": 1.0,
            "width": 32,
            "height": 32,
            "pixels_b64": encode_pixels(page()),
        }
        assert client.post("/v1/gradient", json=body).status_code == 400

    def test_score_unavailable_without_service(self, client):
        body = {
            "pixels_b64": encode_pixels(page()),
            "width": 32,
            "height": 32,
            "prompts": ["a circle"],
        }
        assert client.post("/v1/score", json=body).status_code == 503


@pytest.mark.skip(
    reason="needs pretrained Stable Diffusion weights and CLIP/ImageReward/HPS "
    "checkpoints, which this sandbox cannot download; run with network access "
    "and 'pip install sketch-sidecar[sds,scoring]'"
)
class TestPretrainedLiveSanity:
    def test_dog_vs_skyscraper_ordering(self):
        from sketch_sidecar.scoring import load_score_service

        service = load_score_service()
        # any clearly dog-like photo; scores must order the true caption first
        raise NotImplementedError

    def test_sd15_gradients_non_divergent(self):
        from sketch_sidecar.sds import load_stable_diffusion

        load_stable_diffusion("runwayml/stable-diffusion-v1-5")
        raise NotImplementedError
