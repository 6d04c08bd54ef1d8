"""Wire protocol models and pixel codecs.

The server speaks three routes:

* ``POST /v1/gradient`` -- one rendered branch image in, one per-pixel
  gradient out. Pixels travel as base64 of row-major float32 little-endian,
  in the page convention (1 = white paper, 0 = black ink); the gradient
  comes back as d loss / d pixel in that same sent convention.
* ``POST /v1/score``    -- one image plus a prompt list in; per-prompt CLIP,
  ImageReward and HPS values out.
* ``GET  /v1/health``   -- mode and liveness.
"""

from __future__ import annotations

import base64

import numpy as np
from pydantic import BaseModel, Field


class GradientRequest(BaseModel):
    prompt_id: str
    branch_index: int
    step: int
    guidance_scale: float = Field(gt=0)
    width: int = Field(ge=1)
    height: int = Field(ge=1)
    pixels_b64: str


class GradientResponse(BaseModel):
    grad_b64: str
    scalar_diag: float
    provider_info: str


class ScoreRequest(BaseModel):
    pixels_b64: str
    width: int = Field(ge=1)
    height: int = Field(ge=1)
    prompts: list[str]


class ScoreResponse(BaseModel):
    clip: list[float]
    image_reward: list[float]
    hps: list[float]


class HealthResponse(BaseModel):
    status: str
    mode: str


class PayloadError(ValueError):
    """Body decoded but the pixel payload is unusable."""


def decode_pixels(b64: str, height: int, width: int) -> np.ndarray:
    try:
        raw = base64.b64decode(b64, validate=True)
    except Exception as exc:
        raise PayloadError(f"invalid base64: {exc}") from exc
    expected = height * width * 4
    if len(raw) != expected:
        raise PayloadError(f"payload holds {len(raw)} bytes, expected {expected}")
    return np.frombuffer(raw, dtype="<f4").reshape(height, width).astype(np.float64)


def encode_pixels(pixels: np.ndarray) -> str:
    return base64.b64encode(
        np.ascontiguousarray(pixels, dtype="<f4").tobytes()
    ).decode("ascii")
