"""Candidate filtering, metric-based ranking, and concealment metrics.

A candidate is one finished optimization run, scored per cumulative phase
render and per delta-only render (the strokes a phase adds, drawn alone).
The rank rewards candidates whose phases score well while their delta
strokes alone do not: if the added strokes already carry the final concept
by themselves, the prefix contributed nothing and the reveal falls flat.

For the two-phase case the components are

    S_CLIP = (CLIP_1 * CLIP_2) / CLIP_delta^2
    S_IR   = phi(IR_1)^2 + phi(IR_2)^2 - phi(IR_delta)^2
    S_HPS  = HPS_1^2 + HPS_2^2 - HPS_delta^2
    R      = S_CLIP * S_IR * S_HPS

with phi the standard normal CDF (ImageReward values are unbounded, so they
are squashed first). With K > 2 phases the products and sums extend over
all phases and all K-1 delta subsets; the CLIP denominator uses exponent
K/(K-1) so the ratio stays scale-invariant. That generalization is this
package's extension, not part of the two-phase definition.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

DEFAULT_TAU = 0.07


class CandidateRejected(ValueError):
    """The candidate cannot be ranked (e.g. zero CLIP_delta)."""

    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


@dataclass(frozen=True)
class MetricTriple:
    clip: float
    ir: float
    hps: float


@dataclass(frozen=True)
class CandidateScores:
    """Per-phase scores plus per-delta-subset scores for one candidate.

    ``phase[i]`` scores the cumulative render of phase i+1 against its own
    prompt. ``delta[j]`` scores the delta-only render of phase j+2 against
    the *final* prompt (K-1 entries; phase 1's delta is the prefix itself).
    """

    phase: tuple[MetricTriple, ...]
    delta: tuple[MetricTriple, ...]

    def __post_init__(self) -> None:
        if len(self.phase) < 2:
            raise ValueError("need scores for at least two phases")
        if len(self.delta) != len(self.phase) - 1:
            raise ValueError(
                f"{len(self.delta)} delta scores for {len(self.phase)} phases "
                "(need K-1)"
            )
        for t in (*self.phase, *self.delta):
            for v in (t.clip, t.ir, t.hps):
                if not math.isfinite(v):
                    raise ValueError(f"scores must be finite, got {v}")

    @property
    def num_phases(self) -> int:
        return len(self.phase)


def phi(x: float) -> float:
    """Standard normal CDF via erf."""
    return 0.5 * (1.0 + math.erf(x / math.sqrt(2.0)))


def rank_components(sc: CandidateScores) -> tuple[float, float, float]:
    """(S_CLIP, S_IR, S_HPS) for a candidate; raises CandidateRejected."""
    k = sc.num_phases
    clip_delta_prod = math.prod(d.clip for d in sc.delta)
    if clip_delta_prod == 0.0:
        raise CandidateRejected("undefined-ratio")
    s_clip = math.prod(p.clip for p in sc.phase) / clip_delta_prod ** (k / (k - 1))
    s_ir = sum(phi(p.ir) ** 2 for p in sc.phase) - sum(
        phi(d.ir) ** 2 for d in sc.delta
    )
    s_hps = sum(p.hps**2 for p in sc.phase) - sum(d.hps**2 for d in sc.delta)
    return float(s_clip), float(s_ir), float(s_hps)


def rank_score(sc: CandidateScores) -> float:
    """Final rank R = S_CLIP * S_IR * S_HPS."""
    s_clip, s_ir, s_hps = rank_components(sc)
    return s_clip * s_ir * s_hps


def structural_concealment(metric_full: float, metric_delta: float) -> float:
    """Full-render score minus delta-only score, same metric family.

    Positive values mean the prefix strokes still carry structural weight in
    the full sketch; near zero or negative means the delta strokes alone
    already explain it.
    """
    return float(metric_full) - float(metric_delta)


@dataclass(frozen=True)
class SimilarityMatrix:
    """K x K image-text similarities: rows are phase renders, columns prompts."""

    values: NDArray[np.float64]
    tau: float = DEFAULT_TAU

    def __post_init__(self) -> None:
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim != 2 or vals.shape[0] != vals.shape[1]:
            raise ValueError(f"similarity matrix must be square, got {vals.shape}")
        if not (self.tau > 0):
            raise ValueError(f"tau must be > 0, got {self.tau}")
        object.__setattr__(self, "values", vals)


def semantic_concealment(sim: SimilarityMatrix) -> float:
    """Trace of the row-wise tempered softmax of the similarity matrix.

    Each phase render distributes belief over the prompts; the diagonal
    mass measures how exclusively each phase reads as its *own* prompt.
    Ranges in (0, K].
    """
    z = sim.values / sim.tau
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    soft = e / e.sum(axis=1, keepdims=True)
    return float(np.trace(soft))


def filter_candidates(
    candidates, thresholds: MetricTriple
) -> list:
    """Keep candidates whose every per-phase metric meets its threshold.

    Delta-only scores are not thresholded; they only enter the rank. Order
    is preserved.
    """
    kept = []
    for cand in candidates:
        ok = all(
            p.clip >= thresholds.clip
            and p.ir >= thresholds.ir
            and p.hps >= thresholds.hps
            for p in cand.phase
        )
        if ok:
            kept.append(cand)
    return kept
