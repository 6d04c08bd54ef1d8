"""Ranking a batch of candidate runs from their metric scores.

Scores would normally come from the guidance sidecar's /v1/score endpoint
(CLIP, ImageReward, HPS per rendered phase and per delta-only render); here
they are fabricated to show how the rank behaves. The key property: a
candidate whose delta strokes alone already score highly is penalized, even
if its full sketch is good, because its prefix contributed nothing.
"""

import numpy as np

from phasesketch import (
    CandidateScores,
    MetricTriple,
    SimilarityMatrix,
    filter_candidates,
    rank_components,
    rank_score,
    semantic_concealment,
    structural_concealment,
)


def candidate(name, clip, ir, hps):
    sc = CandidateScores(
        phase=(MetricTriple(clip[0], ir[0], hps[0]), MetricTriple(clip[1], ir[1], hps[1])),
        delta=(MetricTriple(clip[2], ir[2], hps[2]),),
    )
    return name, sc


candidates = [
    # strong phases, weak delta-only render: the prefix carries weight
    candidate("integrated", clip=(29.5, 30.1, 21.0), ir=(0.9, 1.1, -0.2), hps=(0.27, 0.28, 0.18)),
    # the delta strokes alone already look like the target: occlusion-style
    candidate("occluding", clip=(29.0, 30.0, 29.4), ir=(0.8, 1.0, 0.9), hps=(0.27, 0.28, 0.27)),
    # mediocre everywhere
    candidate("muddy", clip=(24.0, 23.5, 22.0), ir=(0.1, 0.0, 0.1), hps=(0.21, 0.20, 0.19)),
]

print(f"{'candidate':>12} {'S_CLIP':>8} {'S_IR':>8} {'S_HPS':>8} {'R':>10}")
for name, sc in candidates:
    s_clip, s_ir, s_hps = rank_components(sc)
    print(f"{name:>12} {s_clip:8.3f} {s_ir:8.3f} {s_hps:8.3f} {rank_score(sc):10.4f}")

kept = filter_candidates(
    [sc for _, sc in candidates], MetricTriple(clip=24.0, ir=-1.0, hps=0.0)
)
print(f"\nfilter at CLIP >= 24 keeps {len(kept)} of {len(candidates)}")

# concealment diagnostics for the 'integrated' candidate
sc = candidates[0][1]
print("\nstructural concealment (CLIP):", structural_concealment(sc.phase[1].clip, sc.delta[0].clip))

sim = SimilarityMatrix(np.array([[28.0, 21.0], [22.5, 29.0]]), tau=0.07)
print("semantic concealment:", round(semantic_concealment(sim), 4), "of max 2.0")
