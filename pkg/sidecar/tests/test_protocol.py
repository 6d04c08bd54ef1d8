import json
from pathlib import Path

import numpy as np
import pytest

from sketch_sidecar.protocol import (
    GradientRequest,
    PayloadError,
    decode_pixels,
    encode_pixels,
)

GOLDEN = Path(__file__).parent / "golden"


def test_codec_round_trip_float32_exact():
    rng = np.random.default_rng(5)
    img = rng.uniform(0, 1, (7, 9)).astype(np.float32).astype(np.float64)
    assert np.array_equal(decode_pixels(encode_pixels(img), 7, 9), img)


def test_payload_length_validated():
    with pytest.raises(PayloadError):
        decode_pixels(encode_pixels(np.zeros((2, 2))), 4, 4)


def test_invalid_base64_rejected():
    with pytest.raises(PayloadError):
        decode_pixels("not base64!!", 2, 2)


def test_golden_request_parses():
    body = json.loads((GOLDEN / "gradient_request.json").read_text())
    req = GradientRequest(**body)
    pixels = decode_pixels(req.pixels_b64, req.height, req.width)
    # the fixture encodes a 4x4 page ramp: 1 - k/15 for k = 0..15
    expect = (1.0 - np.arange(16) / 15.0).astype(np.float32).reshape(4, 4)
    assert np.array_equal(pixels, expect.astype(np.float64))
    assert req.prompt_id == "a cat"
    assert req.guidance_scale == 100.0
