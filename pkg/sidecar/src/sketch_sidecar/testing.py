"""A miniature latent-diffusion stand-in for tests and transport drills.

This is NOT a pretrained prior: weights are random (but seed-pinned), so
its gradients carry no semantics. It exists because everything around the
model -- request seeding, timestep annealing, noising, classifier-free
guidance, the encoder-Jacobian chain, the wire protocol -- is identical to
a real deployment and deserves fast, deterministic tests that need no
multi-gigabyte checkpoints.
"""

from __future__ import annotations

import hashlib

import numpy as np
import torch
from torch import nn

_EMB_TOKENS = 4
_EMB_DIM = 32


class TinyLatentModel:
    """Implements the LatentDiffusionModel protocol at toy scale."""

    latent_stride = 8

    def __init__(self, seed: int = 0, latent_channels: int = 4):
        gen = torch.Generator().manual_seed(seed)

        def init(shape):
            return torch.randn(shape, generator=gen) * 0.2

        self._enc = nn.Conv2d(3, latent_channels, kernel_size=8, stride=8)
        self._mix = nn.Conv2d(latent_channels, latent_channels, kernel_size=3, padding=1)
        self._emb = nn.Linear(_EMB_DIM, latent_channels)
        with torch.no_grad():
            for mod in (self._enc, self._mix, self._emb):
                mod.weight.copy_(init(mod.weight.shape))
                mod.bias.copy_(init(mod.bias.shape))
        for mod in (self._enc, self._mix, self._emb):
            mod.requires_grad_(False)

        betas = torch.linspace(1e-4, 0.02, 1000, dtype=torch.float64)
        self.alphas_cumprod = torch.cumprod(1.0 - betas, dim=0)

    def encode(self, images):
        return self._enc(images)

    def predict_noise(self, z_t, t, embeddings):
        cond = self._emb(embeddings.mean(dim=1))[:, :, None, None]
        t_scale = 1.0 + 0.5 * float(t) / self.alphas_cumprod.shape[0]
        return torch.tanh(self._mix(z_t * t_scale)) + cond

    def embed_prompts(self, texts):
        rows = []
        for text in texts:
            digest = hashlib.blake2b(text.encode(), digest_size=8).digest()
            rng = np.random.default_rng(int.from_bytes(digest, "little"))
            rows.append(rng.standard_normal((_EMB_TOKENS, _EMB_DIM)))
        return torch.from_numpy(np.stack(rows)).to(torch.float32)
