"""Gradient/scoring engine interface and the model-free echo-zero engine."""

from __future__ import annotations

from typing import Protocol

import numpy as np


class UnknownPromptError(KeyError):
    pass


class Engine(Protocol):
    """What the HTTP app needs from a guidance engine."""

    mode: str

    def gradient(
        self,
        page_pixels: np.ndarray,
        prompt_id: str,
        branch_index: int,
        step: int,
        guidance_scale: float,
    ) -> tuple[np.ndarray, float, str]:
        """Returns (d loss / d page pixel, diagnostic scalar, provider info)."""
        ...

    def score(self, page_pixels: np.ndarray, prompts: list[str]) -> dict:
        """Returns {"clip": [...], "image_reward": [...], "hps": [...]}."""
        ...


class EchoZeroEngine:
    """Exercises the full transport path without loading any model.

    Gradients are all zeros; scores are all zeros. Useful for protocol
    tests, client integration tests, and load drills.
    """

    mode = "echo-zero"

    def gradient(self, page_pixels, prompt_id, branch_index, step, guidance_scale):
        return np.zeros_like(page_pixels), 0.0, "echo-zero"

    def score(self, page_pixels, prompts):
        zeros = [0.0] * len(prompts)
        return {"clip": list(zeros), "image_reward": list(zeros), "hps": list(zeros)}
