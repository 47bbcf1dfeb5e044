"""Tracklet confidence, unified candidate scoring, and NMS selection."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import Candidate, CandidateSource, boxes_to_array, iou_matrix


@dataclass(frozen=True)
class TrackletCounters:
    """Association counters of the current tracklet.

    ``l_det`` counts detections associated to the tracklet; ``l_trk`` counts
    consecutive prediction-only associations since the last detection. Both
    reset when a track is retrieved from the lost state, so only the latest
    tracklet informs the confidence.
    """

    l_det: int = 0
    l_trk: int = 0

    def __post_init__(self) -> None:
        if self.l_det < 0 or self.l_trk < 0:
            raise ValueError(f"counters must be non-negative, got {self}")


def tracklet_confidence(counters: TrackletCounters, alpha: float) -> float:
    """Confidence in a track's prediction, in [0, 1].

    Zero until the tracklet has at least two associated detections (no
    reliable motion model before that), then decays logarithmically with the
    number of prediction-only associations: max(1 - ln(1 + alpha * l_trk), 0).
    """
    if alpha <= 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    if counters.l_det < 2:
        return 0.0
    return max(1.0 - math.log(1.0 + alpha * counters.l_trk), 0.0)


def unified_score(classifier_prob: float, source: CandidateSource, confidence: float) -> float:
    """Fused score: the classifier probability, damped by tracklet confidence
    for prediction candidates so uncertain tracks rank below fresh detections."""
    if source.is_detection:
        return classifier_prob
    return classifier_prob * confidence


def make_candidate(box, source: CandidateSource, classifier_prob: float, confidence: float = 1.0) -> Candidate:
    """Build a candidate with its unified score filled in consistently."""
    return Candidate(
        box=box,
        source=source,
        classifier_prob=classifier_prob,
        unified_score=unified_score(classifier_prob, source, confidence),
    )


def select_candidates(candidates: list[Candidate], tau_nms: float, tau_s: float) -> list[Candidate]:
    """Greedy NMS on unified scores followed by a minimum-score filter.

    Boxes overlapping a kept box with IoU > ``tau_nms`` are suppressed, in
    descending score order; survivors scoring below ``tau_s`` are dropped.
    Ties are broken in favor of detection candidates, then lower input index,
    so the result is deterministic. Output stays in descending score order.
    """
    if not candidates:
        return []
    order = sorted(
        range(len(candidates)),
        key=lambda i: (-candidates[i].unified_score, not candidates[i].source.is_detection, i),
    )
    boxes = boxes_to_array(c.box for c in candidates)
    overlaps = iou_matrix(boxes, boxes)
    suppressed = np.zeros(len(candidates), dtype=bool)
    kept: list[Candidate] = []
    for i in order:
        if suppressed[i]:
            continue
        kept.append(candidates[i])
        suppressed |= overlaps[i] > tau_nms
    return [c for c in kept if c.unified_score >= tau_s]
