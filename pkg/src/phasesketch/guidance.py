"""Semantic guidance providers: per-branch image gradients.

A provider answers one question per iteration and branch: "given this
rendered image and this prompt, in which direction should each pixel's ink
move?" Two providers ship here:

* :class:`TargetMatchProvider` -- a local, fully differentiable stand-in
  that pulls the render toward a fixed target image (mean squared error).
  It keeps the whole optimization loop runnable and testable offline.
* :class:`RemoteProvider` -- a client for the guidance sidecar, which
  computes diffusion-based gradients server-side and speaks the HTTP
  protocol below.

The optimizer's control flow is identical for both; only gradient values
differ.

Wire protocol (shared with the sidecar)
---------------------------------------
POST {endpoint}/v1/gradient with JSON body::

    { "prompt_id": str, "branch_index": int, "step": int,
      "guidance_scale": float, "width": int, "height": int,
      "pixels_b64": base64 of row-major float32 little-endian }

Pixels are sent in the page convention (1 - ink: white paper, black
strokes). The response carries "grad_b64" (d loss / d pixel in the *sent*
convention; this client negates it back to the ink convention),
"scalar_diag" and "provider_info". POST /v1/score and GET /v1/health are
used by ranking and health checks.
"""

from __future__ import annotations

import base64
import time
from dataclasses import dataclass, field

import numpy as np
import requests
from numpy.typing import NDArray

from .raster import InkImage

DEFAULT_GUIDANCE_SCALE = 100.0


class GuidanceError(RuntimeError):
    """Base class for guidance failures."""


class TransportError(GuidanceError):
    """The endpoint could not be reached (after retries); the run aborts."""


class ProtocolError(GuidanceError):
    """The endpoint answered with a malformed or non-finite payload."""


@dataclass(frozen=True)
class GuidanceRequest:
    """One branch's render headed out for a gradient."""

    branch_index: int
    step: int
    prompt_id: str
    image: InkImage
    guidance_scale: float = DEFAULT_GUIDANCE_SCALE

    def __post_init__(self) -> None:
        img = np.asarray(self.image, dtype=np.float64)
        if img.min() < 0.0 or img.max() > 1.0:
            raise ValueError("image pixels must lie in [0, 1]")
        if not (self.guidance_scale > 0):
            raise ValueError(f"guidance_scale must be > 0, got {self.guidance_scale}")
        object.__setattr__(self, "image", img)


@dataclass(frozen=True)
class GuidanceResponse:
    grad_image: InkImage  # d loss / d ink, same shape as the request image
    scalar_diag: float  # loss proxy for tracing; not comparable across providers
    provider_info: str = ""

    def __post_init__(self) -> None:
        grad = np.asarray(self.grad_image, dtype=np.float64)
        if not np.all(np.isfinite(grad)):
            raise ValueError("gradient image must be finite")
        object.__setattr__(self, "grad_image", grad)


def target_match_gradient(image: InkImage, target: InkImage) -> GuidanceResponse:
    """MSE pull toward a fixed target: loss = mean((image - target)^2)."""
    image = np.asarray(image, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if image.shape != target.shape:
        raise ValueError(f"image shape {image.shape} != target shape {target.shape}")
    diff = image - target
    loss = float(np.mean(diff**2))
    grad = 2.0 * diff / diff.size
    return GuidanceResponse(grad, loss, provider_info="target-match")


@dataclass(frozen=True)
class TargetMatchProvider:
    """Local provider pulling renders toward a fixed ink-convention target.

    ``guidance_scale`` is ignored: it parameterizes classifier-free guidance,
    which only exists server-side.
    """

    target: InkImage

    def gradient(self, req: GuidanceRequest) -> GuidanceResponse:
        return target_match_gradient(req.image, self.target)


def encode_pixels(page_pixels: NDArray[np.float64]) -> str:
    """Base64 of row-major float32 little-endian pixel data."""
    return base64.b64encode(
        np.ascontiguousarray(page_pixels, dtype="<f4").tobytes()
    ).decode("ascii")


def decode_pixels(b64: str, height: int, width: int) -> NDArray[np.float64]:
    raw = base64.b64decode(b64, validate=True)
    expected = height * width * 4
    if len(raw) != expected:
        raise ValueError(f"payload holds {len(raw)} bytes, expected {expected}")
    return np.frombuffer(raw, dtype="<f4").reshape(height, width).astype(np.float64)


def gradient_request_body(req: GuidanceRequest) -> dict:
    """The exact JSON body sent to /v1/gradient (page convention pixels)."""
    h, w = req.image.shape
    return {
        "prompt_id": req.prompt_id,
        "branch_index": int(req.branch_index),
        "step": int(req.step),
        "guidance_scale": float(req.guidance_scale),
        "width": int(w),
        "height": int(h),
        "pixels_b64": encode_pixels(1.0 - req.image),
    }


@dataclass
class RemoteProvider:
    """Client for the guidance sidecar.

    Connection failures are retried with exponential backoff up to
    ``max_retries`` extra attempts, then raise :class:`TransportError` so
    the run aborts. Malformed bodies, shape mismatches and non-finite
    gradients raise :class:`ProtocolError` immediately.
    """

    endpoint: str
    max_retries: int = 3
    backoff_base: float = 0.5
    timeout: float = 120.0
    session: requests.Session = field(default_factory=requests.Session, repr=False)

    def gradient(self, req: GuidanceRequest) -> GuidanceResponse:
        payload = self._post("/v1/gradient", gradient_request_body(req))
        h, w = req.image.shape
        try:
            grad_page = decode_pixels(payload["grad_b64"], h, w)
            diag = float(payload["scalar_diag"])
            info = str(payload.get("provider_info", ""))
        except (KeyError, TypeError, ValueError) as exc:
            raise ProtocolError(f"malformed gradient response: {exc}") from exc
        if not np.all(np.isfinite(grad_page)) or not np.isfinite(diag):
            raise ProtocolError("gradient response contains non-finite values")
        # server differentiates w.r.t. the page image (1 - ink)
        return GuidanceResponse(-grad_page, diag, info)

    def score(self, page_pixels: NDArray[np.float64], prompts: list[str]) -> dict:
        """Fetch CLIP / ImageReward / HPS scores for one render."""
        h, w = page_pixels.shape
        body = {
            "pixels_b64": encode_pixels(page_pixels),
            "width": int(w),
            "height": int(h),
            "prompts": list(prompts),
        }
        payload = self._post("/v1/score", body)
        try:
            out = {
                key: [float(v) for v in payload[key]]
                for key in ("clip", "image_reward", "hps")
            }
        except (KeyError, TypeError, ValueError) as exc:
            raise ProtocolError(f"malformed score response: {exc}") from exc
        if any(len(v) != len(prompts) for v in out.values()):
            raise ProtocolError("score response length does not match prompts")
        return out

    def health(self) -> dict:
        try:
            resp = self.session.get(self.endpoint + "/v1/health", timeout=self.timeout)
            resp.raise_for_status()
            return resp.json()
        except requests.RequestException as exc:
            raise TransportError(f"health check failed: {exc}") from exc

    def _post(self, route: str, body: dict) -> dict:
        url = self.endpoint + route
        attempt = 0
        while True:
            try:
                resp = self.session.post(url, json=body, timeout=self.timeout)
            except requests.RequestException as exc:
                if attempt >= self.max_retries:
                    raise TransportError(
                        f"{url} unreachable after {attempt + 1} attempts: {exc}"
                    ) from exc
                time.sleep(self.backoff_base * 2**attempt)
                attempt += 1
                continue
            if resp.status_code != 200:
                raise ProtocolError(f"{url} returned HTTP {resp.status_code}")
            try:
                return resp.json()
            except ValueError as exc:
                raise ProtocolError(f"{url} returned non-JSON body") from exc
