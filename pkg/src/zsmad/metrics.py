"""Attack-detection error rates and operating points.

Score convention throughout: higher = more attack-like, and a score >= t
is called a morph. The morph miss rate at a threshold (the attack-class
error) and the bona fide false-alarm rate form the DET trade-off; the
headline statistic is the bona fide error at the threshold where the
attack-class error is held at a target (default 10%).

All operating points are taken over the finite candidate-threshold set
drawn from the observed scores plus one sentinel below and one above, so
every result is exactly reproducible by exhaustive sweep.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateError


@dataclass(frozen=True)
class LabeledScores:
    bonafide_scores: np.ndarray
    morph_scores: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "bonafide_scores",
                           np.asarray(self.bonafide_scores, dtype=np.float64))
        object.__setattr__(self, "morph_scores",
                           np.asarray(self.morph_scores, dtype=np.float64))


@dataclass(frozen=True)
class DetPoint:
    threshold: float
    macer: float
    bpcer: float


@dataclass(frozen=True)
class OperatingPoint:
    target_macer: float
    achieved_macer: float
    bpcer: float
    threshold: float
    feasible: bool = True


def _require_both(scores: LabeledScores) -> None:
    if scores.morph_scores.size == 0:
        raise DegenerateError("no morph scores")
    if scores.bonafide_scores.size == 0:
        raise DegenerateError("no bona fide scores")


def candidate_thresholds(scores: LabeledScores) -> np.ndarray:
    """Sorted unique observed scores plus below-min and above-max sentinels."""
    _require_both(scores)
    pooled = np.concatenate([scores.bonafide_scores, scores.morph_scores])
    uniq = np.unique(pooled)
    return np.concatenate([[uniq[0] - 1.0], uniq, [uniq[-1] + 1.0]])


def rates_at(scores: LabeledScores, t: float) -> DetPoint:
    """Error rates at one threshold under the score >= t => morph rule."""
    _require_both(scores)
    macer = float(np.count_nonzero(scores.morph_scores < t)) / scores.morph_scores.size
    bpcer = float(np.count_nonzero(scores.bonafide_scores >= t)) / scores.bonafide_scores.size
    return DetPoint(threshold=float(t), macer=macer, bpcer=bpcer)


def det_curve(scores: LabeledScores) -> list[DetPoint]:
    """One DetPoint per candidate threshold, ascending.

    Along the output macer is nondecreasing and bpcer nonincreasing.
    """
    return [rates_at(scores, t) for t in candidate_thresholds(scores)]


def bpcer_at_macer(scores: LabeledScores, target: float = 0.10) -> OperatingPoint:
    """Lowest bona fide error among thresholds holding the attack error <= target.

    Ties prefer larger achieved macer, then smaller threshold. If no
    candidate satisfies the target (cannot happen with a nonempty morph
    set, kept as a guard), the minimal-macer point is returned flagged
    infeasible.
    """
    if not (0.0 < target < 1.0):
        raise ValueError("target must lie in (0, 1)")
    curve = det_curve(scores)
    feasible = [p for p in curve if p.macer <= target]
    if feasible:
        best = min(feasible, key=lambda p: (p.bpcer, -p.macer, p.threshold))
        return OperatingPoint(target_macer=target, achieved_macer=best.macer,
                              bpcer=best.bpcer, threshold=best.threshold)
    best = min(curve, key=lambda p: (p.macer, p.bpcer, p.threshold))
    return OperatingPoint(target_macer=target, achieved_macer=best.macer,
                          bpcer=best.bpcer, threshold=best.threshold, feasible=False)


def eer(scores: LabeledScores) -> float:
    """Equal error rate: (macer+bpcer)/2 at the threshold minimizing their gap."""
    curve = det_curve(scores)
    best = min(curve, key=lambda p: (abs(p.macer - p.bpcer), p.threshold))
    return (best.macer + best.bpcer) / 2.0
