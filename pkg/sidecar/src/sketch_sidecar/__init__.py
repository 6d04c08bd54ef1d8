"""Guidance and scoring server for stroke-sketch optimization.

Serves per-pixel score-distillation gradients from a frozen latent
diffusion model, plus CLIP / ImageReward / HPS scores, over a small HTTP
protocol. An echo-zero mode exercises the whole transport path with no
models loaded.
"""

from .app import create_app
from .engine import EchoZeroEngine, UnknownPromptError
from .protocol import (
    GradientRequest,
    GradientResponse,
    HealthResponse,
    ScoreRequest,
    ScoreResponse,
    decode_pixels,
    encode_pixels,
)

__version__ = "0.1.0"

__all__ = [
    "EchoZeroEngine",
    "GradientRequest",
    "GradientResponse",
    "HealthResponse",
    "ScoreRequest",
    "ScoreResponse",
    "UnknownPromptError",
    "create_app",
    "decode_pixels",
    "encode_pixels",
]
