"""Server entry point.

Echo-zero mode (no models, full protocol):

    python -m sketch_sidecar --mode echo-zero --port 8765

SDS mode (frozen diffusion guidance plus scoring; models load at startup
and failures abort immediately):

    python -m sketch_sidecar --mode sds --port 8765 \\
        --model-id runwayml/stable-diffusion-v1-5 \\
        --prompts prompts.json --seed 7

``prompts.json`` maps prompt ids to prompt text:
{"disk": "a minimal line drawing of a circle", ...}
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import uvicorn

from .app import create_app
from .engine import EchoZeroEngine


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sketch-sidecar")
    parser.add_argument("--mode", choices=["sds", "echo-zero"], default="echo-zero")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8765)
    parser.add_argument("--model-id", default="runwayml/stable-diffusion-v1-5")
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--prompts", help="JSON file: prompt id -> prompt text")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--anneal-steps", type=int, default=2000)
    parser.add_argument(
        "--encoder-bypass",
        action="store_true",
        help="skip the encoder Jacobian (coarse upsampling approximation)",
    )
    parser.add_argument(
        "--no-scoring",
        action="store_true",
        help="serve gradients only; /v1/score answers 503",
    )
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.mode == "echo-zero":
        app = create_app(EchoZeroEngine())
    else:
        from .scoring import load_score_service
        from .sds import SDSEngine, TimestepPolicy, load_stable_diffusion

        if not args.prompts:
            print("--prompts is required in sds mode", file=sys.stderr)
            return 2
        prompts = json.loads(Path(args.prompts).read_text())
        model = load_stable_diffusion(args.model_id, args.device)  # fail fast
        engine = SDSEngine(
            model=model,
            prompts=prompts,
            seed=args.seed,
            policy=TimestepPolicy(anneal_steps=args.anneal_steps),
            encoder_bypass=args.encoder_bypass,
        )
        score_service = None if args.no_scoring else load_score_service(device=args.device)
        app = create_app(engine, score_service)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


if __name__ == "__main__":
    sys.exit(main())
