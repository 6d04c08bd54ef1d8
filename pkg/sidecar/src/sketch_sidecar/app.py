"""FastAPI application exposing /v1/gradient, /v1/score, /v1/health."""

from __future__ import annotations

import numpy as np
from fastapi import FastAPI, HTTPException

from .engine import Engine, UnknownPromptError
from .protocol import (
    GradientRequest,
    GradientResponse,
    HealthResponse,
    PayloadError,
    ScoreRequest,
    ScoreResponse,
    decode_pixels,
    encode_pixels,
)


def create_app(engine: Engine, score_service=None) -> FastAPI:
    """Wire an engine (and optionally a dedicated score service) to routes.

    When ``score_service`` is None, /v1/score is answered by the engine
    itself (the echo-zero engine serves zeros; the SDS engine refuses).
    """
    app = FastAPI(title="sketch-sidecar", version="0.1.0")

    @app.get("/v1/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        return HealthResponse(status="ok", mode=engine.mode)

    @app.post("/v1/gradient", response_model=GradientResponse)
    def gradient(req: GradientRequest) -> GradientResponse:
        try:
            pixels = decode_pixels(req.pixels_b64, req.height, req.width)
        except PayloadError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        try:
            grad, diag, info = engine.gradient(
                pixels, req.prompt_id, req.branch_index, req.step, req.guidance_scale
            )
        except UnknownPromptError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        if grad.shape != pixels.shape or not np.all(np.isfinite(grad)):
            raise HTTPException(
                status_code=500, detail="engine produced an invalid gradient"
            )
        return GradientResponse(
            grad_b64=encode_pixels(grad), scalar_diag=diag, provider_info=info
        )

    @app.post("/v1/score", response_model=ScoreResponse)
    def score(req: ScoreRequest) -> ScoreResponse:
        try:
            pixels = decode_pixels(req.pixels_b64, req.height, req.width)
        except PayloadError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        if not req.prompts:
            raise HTTPException(status_code=400, detail="prompts must be non-empty")
        service = score_service if score_service is not None else engine
        try:
            out = service.score(pixels, req.prompts)
        except NotImplementedError as exc:
            raise HTTPException(status_code=503, detail=str(exc)) from exc
        return ScoreResponse(**out)

    return app
