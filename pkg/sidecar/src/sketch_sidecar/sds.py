"""Score-distillation gradients from a frozen latent diffusion model.

For a rendered branch image the engine: encodes it to a latent z through
the (frozen, differentiable) encoder; draws a timestep t and noise eps from
a request-determined seed; forms the noised latent

    z_t = sqrt(alpha_bar_t) * z + sqrt(1 - alpha_bar_t) * eps;

queries the noise predictor with classifier-free guidance

    eps_cfg = eps_uncond + s * (eps_cond - eps_uncond);

and returns the weighted residual w(t) * (eps_cfg - eps) chained back to
pixel space. The default w(t) = 1 - alpha_bar_t is the schedule's
sigma^2-derived weighting. The chain runs through the true encoder Jacobian
(autograd); an optional bypass replaces it with a coarse nearest-neighbor
upsampling of the latent gradient.

Noise and timestep are seeded from (seed, step, branch, prompt), never from
the guidance scale, so: identical requests produce bit-identical gradients,
and requests differing only in scale share (t, eps) -- which makes the CFG
term exactly linear in the scale.

Timesteps are sampled uniformly from [t_min, upper(step)], with the upper
bound annealed linearly from t_max down to t_end over anneal_steps; later
iterations then refine with small noise levels.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np


class LatentDiffusionModel(Protocol):
    """The handful of frozen-model operations SDS needs."""

    latent_stride: int
    alphas_cumprod: "object"  # 1-D float tensor over the training schedule

    def encode(self, images):
        """(B, 3, H, W) in [-1, 1] -> latents; must be differentiable."""
        ...

    def predict_noise(self, z_t, t, embeddings):
        """Predict eps for the noised latent at timestep index t."""
        ...

    def embed_prompts(self, texts: list[str]):
        """Text -> conditioning embeddings, stacked along dim 0."""
        ...


@dataclass(frozen=True)
class TimestepPolicy:
    t_min: float = 0.05
    t_max: float = 0.95
    t_end: float = 0.5  # upper bound after annealing
    anneal_steps: int = 2000

    def upper(self, step: int) -> float:
        frac = min(max(step, 0), self.anneal_steps) / self.anneal_steps
        return self.t_max + frac * (self.t_end - self.t_max)


def _request_seed(base_seed: int, step: int, branch_index: int, prompt_id: str) -> int:
    """Process-stable seed; guidance scale deliberately excluded."""
    h = hashlib.blake2b(
        f"{base_seed}|{step}|{branch_index}|{prompt_id}".encode(), digest_size=8
    ).digest()
    return int.from_bytes(h, "little") & 0x7FFFFFFF


@dataclass
class SDSEngine:
    """Serves /v1/gradient from a frozen latent diffusion model.

    ``prompts`` maps prompt ids to prompt text; ids are registered up front
    and unknown ids are rejected. ``encoder_bypass`` swaps the encoder
    Jacobian for nearest upsampling (a coarse approximation, off by default).
    """

    model: LatentDiffusionModel
    prompts: dict[str, str]
    seed: int = 0
    policy: TimestepPolicy = field(default_factory=TimestepPolicy)
    encoder_bypass: bool = False
    mode: str = "sds"

    def __post_init__(self) -> None:
        import torch

        self._torch = torch
        if not self.prompts:
            raise ValueError("sds mode needs at least one registered prompt")
        ids = sorted(self.prompts)
        with torch.no_grad():
            embs = self.model.embed_prompts([self.prompts[i] for i in ids])
            uncond = self.model.embed_prompts([""])
        self._cond = {pid: embs[i : i + 1] for i, pid in enumerate(ids)}
        self._uncond = uncond
        self._alphas = self.model.alphas_cumprod.detach().to(torch.float64)

    def gradient(self, page_pixels, prompt_id, branch_index, step, guidance_scale):
        torch = self._torch
        if prompt_id not in self._cond:
            from .engine import UnknownPromptError

            raise UnknownPromptError(
                f"prompt {prompt_id!r} is not registered with this server"
            )
        h, w = page_pixels.shape
        stride = self.model.latent_stride
        if h % stride or w % stride:
            raise ValueError(
                f"image size {h}x{w} must be divisible by the latent stride {stride}"
            )

        gen = torch.Generator(device="cpu").manual_seed(
            _request_seed(self.seed, step, branch_index, prompt_id)
        )
        n_t = self._alphas.shape[0]
        t_frac = self.policy.t_min + (
            self.policy.upper(step) - self.policy.t_min
        ) * torch.rand((), generator=gen).item()
        t_index = min(int(t_frac * n_t), n_t - 1)
        alpha_bar = float(self._alphas[t_index])
        sqrt_ab = alpha_bar**0.5
        sqrt_one_minus = (1.0 - alpha_bar) ** 0.5
        weight = 1.0 - alpha_bar  # sigma^2-derived default w(t)

        page = torch.from_numpy(np.ascontiguousarray(page_pixels)).to(torch.float32)
        image = (page * 2.0 - 1.0).expand(3, h, w).unsqueeze(0).clone()
        image.requires_grad_(not self.encoder_bypass)

        z = self.model.encode(image)
        eps = torch.randn(z.shape, generator=gen, dtype=torch.float32).to(
            z.device, z.dtype
        )
        z_t = sqrt_ab * z.detach() + sqrt_one_minus * eps
        t = torch.tensor(t_index, dtype=torch.long)
        with torch.no_grad():
            eps_cond = self.model.predict_noise(z_t, t, self._cond[prompt_id])
            eps_uncond = self.model.predict_noise(z_t, t, self._uncond)
        eps_cfg = eps_uncond + guidance_scale * (eps_cond - eps_uncond)
        residual = weight * (eps_cfg - eps)

        # chain d z_t / d z = sqrt(alpha_bar), then the encoder Jacobian
        grad_z = sqrt_ab * residual
        if self.encoder_bypass:
            per_pixel = grad_z.mean(dim=1, keepdim=True) / (stride * stride)
            grad_image = per_pixel.repeat_interleave(stride, dim=2).repeat_interleave(
                stride, dim=3
            ).expand(1, 3, h, w)
        else:
            (grad_image,) = self._torch.autograd.grad(
                z, image, grad_outputs=grad_z.to(z.dtype)
            )
        # image = 2 * page - 1, replicated to 3 channels
        grad_page = 2.0 * grad_image.sum(dim=1)[0]

        diag = float((residual.to(torch.float64) ** 2).mean())
        info = f"sds(t={t_index}, w={weight:.4f}, cfg={guidance_scale:g})"
        return grad_page.detach().cpu().numpy().astype(np.float64), diag, info

    def score(self, page_pixels, prompts):
        raise NotImplementedError(
            "scoring is served by the score service, not the SDS engine"
        )


def load_stable_diffusion(model_id: str, device: str = "cpu"):
    """Load a pretrained latent diffusion model via diffusers (frozen).

    Separated from the engine so the server can fail fast at startup when
    the packages or weights are unavailable.
    """
    try:
        import torch
        from diffusers import AutoencoderKL, DDPMScheduler, UNet2DConditionModel
        from transformers import CLIPTextModel, CLIPTokenizer
    except ImportError as exc:
        raise RuntimeError(
            "sds mode needs torch, diffusers and transformers; "
            "install with: pip install 'sketch-sidecar[sds]'"
        ) from exc

    vae = AutoencoderKL.from_pretrained(model_id, subfolder="vae").to(device).eval()
    unet = (
        UNet2DConditionModel.from_pretrained(model_id, subfolder="unet")
        .to(device)
        .eval()
    )
    tokenizer = CLIPTokenizer.from_pretrained(model_id, subfolder="tokenizer")
    text_encoder = (
        CLIPTextModel.from_pretrained(model_id, subfolder="text_encoder")
        .to(device)
        .eval()
    )
    scheduler = DDPMScheduler.from_pretrained(model_id, subfolder="scheduler")
    for module in (vae, unet, text_encoder):
        module.requires_grad_(False)

    class _DiffusersModel:
        latent_stride = 8
        alphas_cumprod = scheduler.alphas_cumprod

        def encode(self, images):
            posterior = vae.encode(images.to(device)).latent_dist
            return posterior.mean * vae.config.scaling_factor

        def predict_noise(self, z_t, t, embeddings):
            return unet(
                z_t.to(device), t.to(device), encoder_hidden_states=embeddings
            ).sample

        def embed_prompts(self, texts):
            tokens = tokenizer(
                texts,
                padding="max_length",
                max_length=tokenizer.model_max_length,
                truncation=True,
                return_tensors="pt",
            )
            return text_encoder(tokens.input_ids.to(device))[0]

    return _DiffusersModel()
