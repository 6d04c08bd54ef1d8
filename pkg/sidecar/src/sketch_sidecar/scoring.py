"""Image-text scorers behind /v1/score: CLIP, ImageReward, HPS.

Each scorer loads its model once at construction (the server constructs
them at startup so missing weights fail fast, not mid-run) and is
deterministic: no sampling anywhere, so identical inputs give identical
scores.

CLIP similarities are reported in the x100 convention (cosine similarity
times 100), which puts typical sketch-prompt pairs in the 15-35 range.
HPS uses the same CLIP architecture with a human-preference checkpoint, so
both go through the one wrapper below.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_CLIP_MODEL = "openai/clip-vit-base-patch32"
DEFAULT_HPS_MODEL = "xswu/HPSv2"
DEFAULT_IMAGE_REWARD = "ImageReward-v1.0"


def _page_to_pil(page_pixels: np.ndarray):
    from PIL import Image

    gray = np.clip(page_pixels, 0.0, 1.0)
    rgb = np.repeat((gray * 255.0).astype(np.uint8)[:, :, None], 3, axis=2)
    return Image.fromarray(rgb, mode="RGB")


class ClipSimilarityScorer:
    """Cosine similarity (x100) between an image and each prompt."""

    def __init__(self, model_id: str = DEFAULT_CLIP_MODEL, device: str = "cpu"):
        try:
            import torch
            from transformers import CLIPModel, CLIPProcessor
        except ImportError as exc:
            raise RuntimeError(
                "CLIP scoring needs torch and transformers installed"
            ) from exc
        self._torch = torch
        self.device = device
        self.model = CLIPModel.from_pretrained(model_id).to(device).eval()
        self.processor = CLIPProcessor.from_pretrained(model_id)

    def score(self, page_pixels: np.ndarray, prompts: list[str]) -> list[float]:
        torch = self._torch
        inputs = self.processor(
            text=prompts,
            images=_page_to_pil(page_pixels),
            return_tensors="pt",
            padding=True,
        ).to(self.device)
        with torch.no_grad():
            out = self.model(**inputs)
            img = out.image_embeds / out.image_embeds.norm(dim=-1, keepdim=True)
            txt = out.text_embeds / out.text_embeds.norm(dim=-1, keepdim=True)
            sims = (img @ txt.T)[0] * 100.0
        return [float(v) for v in sims]


class ImageRewardScorer:
    def __init__(self, model_id: str = DEFAULT_IMAGE_REWARD, device: str = "cpu"):
        try:
            import ImageReward
        except ImportError as exc:
            raise RuntimeError(
                "ImageReward scoring needs the 'image-reward' package installed"
            ) from exc
        self.model = ImageReward.load(model_id, device=device)

    def score(self, page_pixels: np.ndarray, prompts: list[str]) -> list[float]:
        pil = _page_to_pil(page_pixels)
        return [float(self.model.score(prompt, [pil])) for prompt in prompts]


@dataclass
class ScoreService:
    """Bundles the three scorers behind the /v1/score contract."""

    clip: object
    image_reward: object
    hps: object

    def score(self, page_pixels: np.ndarray, prompts: list[str]) -> dict:
        return {
            "clip": self.clip.score(page_pixels, prompts),
            "image_reward": self.image_reward.score(page_pixels, prompts),
            "hps": self.hps.score(page_pixels, prompts),
        }


def load_score_service(
    clip_model: str = DEFAULT_CLIP_MODEL,
    hps_model: str = DEFAULT_HPS_MODEL,
    image_reward_model: str = DEFAULT_IMAGE_REWARD,
    device: str = "cpu",
) -> ScoreService:
    """Instantiate all three scorers; raises at once if any model is missing."""
    return ScoreService(
        clip=ClipSimilarityScorer(clip_model, device),
        image_reward=ImageRewardScorer(image_reward_model, device),
        hps=ClipSimilarityScorer(hps_model, device),
    )
