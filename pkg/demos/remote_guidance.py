"""Talking to the guidance sidecar over its HTTP protocol.

Start the sidecar first (echo-zero mode needs no models):

    pip install -e ./sidecar
    python -m sketch_sidecar --mode echo-zero --port 8765

Then run this script. It health-checks the server, sends one gradient
request for a rendered image, and fetches scores. With --mode sds (and the
diffusion weights available to the server) the same calls return real
score-distillation gradients; nothing in this client changes.
"""

import os
import sys

import numpy as np

from phasesketch import CubicBezier, GuidanceRequest, RemoteProvider, RenderConfig, StrokeSet, render

endpoint = os.environ.get("PHASESKETCH_ENDPOINT", "http://127.0.0.1:8765")
provider = RemoteProvider(endpoint, max_retries=1, backoff_base=0.2)

try:
    health = provider.health()
except Exception as exc:  # noqa: BLE001 - demo-level reporting
    sys.exit(f"sidecar not reachable at {endpoint}: {exc}")

print(f"sidecar at {endpoint}: {health}")

strokes = StrokeSet(
    (CubicBezier(np.array([[0.3, 0.5], [0.4, 0.3], [0.6, 0.3], [0.7, 0.5]]), width=0.01),)
)
image = render(strokes, RenderConfig(resolution=224))

resp = provider.gradient(
    GuidanceRequest(branch_index=1, step=0, prompt_id="an arch", image=image)
)
print(f"gradient: shape={resp.grad_image.shape} |g|={np.abs(resp.grad_image).max():.3g} "
      f"diag={resp.scalar_diag:.4f} from {resp.provider_info!r}")

scores = provider.score(1.0 - image, ["an arch", "a skyscraper"])
print("scores:", scores)
