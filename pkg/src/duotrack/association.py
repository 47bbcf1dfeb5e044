"""Online tracking loop: candidate collection, scoring, hierarchical
association, and track lifecycle.

Each frame is processed in one pass:

1. Collect candidate boxes from the detector and from the Kalman prediction
   of every live track, and score them all against the frame's score maps.
   Prediction candidates are damped by their tracklet confidence, so stale
   tracks cannot crowd out fresh detections.
2. Run joint NMS over both candidate sources and drop low scores. Running the
   two sources together is what lets a reliable prediction suppress a noisy
   overlapping detection and vice versa.
3. Embed the surviving detection candidates, then associate hierarchically:
   first confirmed and lost tracks against detection candidates by gallery
   appearance distance (this is also how lost tracks are retrieved), then the
   remaining non-lost tracks against all remaining candidates by IoU with the
   track's predicted box.
4. Update matched tracks. Detection matches feed the filter, the counters,
   and the appearance gallery; prediction-only matches feed the filter and
   the l_trk counter but never the gallery. A retrieved lost track restarts
   its filter and counters from the matched box.
5. Unmatched confirmed tracks become lost (and expire after a configurable
   number of frames); unmatched tentative tracks are dropped; leftover
   detection candidates seed new tentative tracks. Tracks are confirmed once
   two detections have been associated; lost tracks are withheld from the
   frame output until retrieved.

Per-stage matching is an optimal (Hungarian) assignment over gated costs,
which keeps results deterministic and directly checkable against brute force.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .appearance import EmbeddingProvider, FeatureGallery
from .core import BoundingBox, Candidate, CandidateSource, Detection, TrackerConfig, boxes_to_array, iou_matrix
from .errors import ConfigError, DegenerateStateError, DuotrackError, SequenceError
from .motion import MotionNoise, MotionState, kf_init, kf_predict, kf_update, to_box
from .scoremaps import ScoreMapProvider, cell_span, classify_rois
from .selection import TrackletCounters, make_candidate, select_candidates, tracklet_confidence

logger = logging.getLogger(__name__)

_FORBIDDEN_COST = 1e9


class TrackState(Enum):
    TENTATIVE = "tentative"
    CONFIRMED = "confirmed"
    LOST = "lost"
    REMOVED = "removed"


@dataclass(eq=False)
class Track:
    """One tracked identity and everything the tracker knows about it."""

    track_id: int
    state: TrackState
    motion: MotionState
    counters: TrackletCounters
    gallery: FeatureGallery
    last_frame: int
    frames_lost: int = 0
    predicted_box: BoundingBox | None = field(default=None, repr=False)


@dataclass(frozen=True)
class Assignment:
    """Outcome of one gated matching stage, in row/column index space."""

    matches: tuple[tuple[int, int], ...]
    unmatched_tracks: tuple[int, ...]
    unmatched_candidates: tuple[int, ...]


@dataclass(frozen=True)
class FrameResult:
    """Tracks emitted for one frame: every track currently backed by evidence.

    Covers confirmed tracks and tentative ones not yet twice-detected; lost
    tracks are withheld until retrieved.
    """

    frame: int
    tracks: tuple[tuple[int, BoundingBox], ...]


def min_cost_match(cost: np.ndarray, gate: float) -> Assignment:
    """Minimum-cost bipartite matching over entries within the gate.

    Entries above ``gate`` are forbidden. Among matchings that pair the
    largest possible number of allowed (row, column) pairs, the one with the
    least total cost is returned. Empty inputs yield an all-unmatched result.
    """
    cost = np.atleast_2d(np.asarray(cost, dtype=np.float64))
    n, m = cost.shape
    if n == 0 or m == 0:
        return Assignment((), tuple(range(n)), tuple(range(m)))
    allowed = cost <= gate
    padded = np.where(allowed, cost, _FORBIDDEN_COST)
    rows, cols = linear_sum_assignment(padded)
    matches = []
    matched_rows = set()
    matched_cols = set()
    for r, c in zip(rows, cols):
        if allowed[r, c]:
            matches.append((int(r), int(c)))
            matched_rows.add(int(r))
            matched_cols.add(int(c))
    return Assignment(
        matches=tuple(matches),
        unmatched_tracks=tuple(r for r in range(n) if r not in matched_rows),
        unmatched_candidates=tuple(c for c in range(m) if c not in matched_cols),
    )


def _appearance_cost_matrix(tracks: Sequence[Track], embeddings: np.ndarray) -> np.ndarray:
    """Gallery-to-embedding distances, (n_tracks, n_embeddings).

    Entry (i, j) is the minimum Euclidean distance between embedding j and any
    embedding stored in track i's gallery, computed for all pairs at once.
    """
    stacked = np.vstack([t.gallery.matrix() for t in tracks])
    gallery_norms = np.concatenate([t.gallery.sq_norms() for t in tracks])
    query_norms = np.einsum("ij,ij->i", embeddings, embeddings)
    sq = gallery_norms[:, None] + query_norms[None, :] - 2.0 * (stacked @ embeddings.T)
    np.clip(sq, 0.0, None, out=sq)
    sizes = [len(t.gallery) for t in tracks]
    offsets = np.cumsum([0] + sizes[:-1])
    return np.sqrt(np.minimum.reduceat(sq, offsets, axis=0))


class Tracker:
    """Stateful per-sequence tracker; feed frames in strictly increasing order."""

    def __init__(self, config: TrackerConfig | None = None):
        self.config = config or TrackerConfig()
        self.tracks: list[Track] = []
        self._next_id = 1
        self._last_frame: int | None = None
        self._noise = MotionNoise.from_config(self.config)

    def _new_track(self, frame: int, box: BoundingBox, embedding: np.ndarray) -> Track:
        gallery = FeatureGallery(self.config.gallery_capacity)
        gallery.add(embedding)
        track = Track(
            track_id=self._next_id,
            state=TrackState.TENTATIVE,
            motion=kf_init(box, self._noise),
            counters=TrackletCounters(l_det=1, l_trk=0),
            gallery=gallery,
            last_frame=frame,
        )
        self._next_id += 1
        return track

    def step(
        self,
        frame: int,
        detections: Sequence[Detection],
        score_provider: ScoreMapProvider,
        embedding_provider: EmbeddingProvider,
    ) -> FrameResult:
        cfg = self.config
        if self._last_frame is not None and frame <= self._last_frame:
            raise SequenceError(f"frame {frame} fed after frame {self._last_frame}; frames must increase")
        self._last_frame = frame

        try:
            maps = score_provider.score_maps(frame)
        except DuotrackError as exc:
            raise type(exc)(f"frame {frame}: {exc}") from exc
        if maps.k != cfg.k:
            raise ConfigError(f"score maps for frame {frame} have k={maps.k}, configured k={cfg.k}")

        self.tracks = [t for t in self.tracks if t.state is not TrackState.REMOVED]

        # candidate collection: detections first, then track predictions
        boxes: list[BoundingBox] = [d.box for d in detections]
        sources: list[CandidateSource] = [CandidateSource.detection()] * len(boxes)
        confidences: list[float] = [1.0] * len(boxes)
        for track in self.tracks:
            track.motion = kf_predict(track.motion, self._noise)
            try:
                track.predicted_box = to_box(track.motion)
            except DegenerateStateError:
                logger.debug("track %d dropped: degenerate motion state", track.track_id)
                track.state = TrackState.REMOVED
                track.predicted_box = None
                continue
            if cfg.enable_track_candidates:
                boxes.append(track.predicted_box)
                sources.append(CandidateSource.from_track(track.track_id))
                confidences.append(tracklet_confidence(track.counters, cfg.alpha))
        self.tracks = [t for t in self.tracks if t.state is not TrackState.REMOVED]

        # boxes fully outside the map yield no candidate
        usable = [i for i, b in enumerate(boxes) if cell_span(maps, b) is not None]
        probs = classify_rois(maps, [boxes[i] for i in usable])
        candidates = [
            make_candidate(boxes[i], sources[i], float(p), confidences[i]) for i, p in zip(usable, probs)
        ]
        selected = select_candidates(candidates, cfg.tau_nms, cfg.tau_s)

        # appearance features are extracted for detection candidates only
        det_sel: list[int] = [i for i, c in enumerate(selected) if c.source.is_detection]
        embeddings: dict[int, np.ndarray] = {}
        for si in det_sel:
            try:
                vec = embedding_provider.embed(frame, selected[si].box)
            except DuotrackError as exc:
                raise type(exc)(f"frame {frame}: {exc}") from exc
            vec = np.asarray(vec, dtype=np.float32).reshape(-1)
            if vec.shape[0] != cfg.embedding_dim:
                raise ConfigError(
                    f"embedding provider returned dimension {vec.shape[0]}, configured {cfg.embedding_dim}"
                )
            if cfg.normalize_embeddings:
                norm = float(np.linalg.norm(vec))
                if norm > 0:
                    vec = vec / norm
            embeddings[si] = vec

        matched: list[tuple[Track, int]] = []

        # stage 1: appearance association of confirmed and lost tracks with
        # detection candidates; this is also the lost-track retrieval path
        stage1_tracks: list[Track] = []
        if cfg.enable_appearance_stage:
            stage1_tracks = [
                t
                for t in self.tracks
                if t.state in (TrackState.CONFIRMED, TrackState.LOST) and len(t.gallery) > 0
            ]
        if stage1_tracks and det_sel:
            query = np.stack([embeddings[si] for si in det_sel]).astype(np.float64)
            cost = _appearance_cost_matrix(stage1_tracks, query)
            assignment = min_cost_match(cost, cfg.tau_d)
            for ti, ci in assignment.matches:
                matched.append((stage1_tracks[ti], det_sel[ci]))

        matched_tracks = {id(t) for t, _ in matched}
        matched_sel = {si for _, si in matched}

        # stage 2: IoU association of the remaining non-lost tracks with all
        # remaining candidates; tentative tracks only ever match here
        stage2_tracks = [
            t
            for t in self.tracks
            if id(t) not in matched_tracks
            and t.state in (TrackState.CONFIRMED, TrackState.TENTATIVE)
            and t.predicted_box is not None
        ]
        stage2_sel = [si for si in range(len(selected)) if si not in matched_sel]
        if stage2_tracks and stage2_sel:
            track_boxes = boxes_to_array(t.predicted_box for t in stage2_tracks)
            cand_boxes = boxes_to_array(selected[si].box for si in stage2_sel)
            cost = 1.0 - iou_matrix(track_boxes, cand_boxes)
            assignment = min_cost_match(cost, 1.0 - cfg.tau_iou)
            for ti, ci in assignment.matches:
                track = stage2_tracks[ti]
                si = stage2_sel[ci]
                source = selected[si].source
                if not source.is_detection and source.track_id != track.track_id:
                    logger.debug(
                        "track %d matched the prediction of track %d", track.track_id, source.track_id
                    )
                matched.append((track, si))
                matched_tracks.add(id(track))
                matched_sel.add(si)

        # update matched tracks
        for track, si in matched:
            candidate = selected[si]
            if track.state is TrackState.LOST:
                # retrieval starts a fresh tracklet: new filter, new counters
                track.motion = kf_init(candidate.box, self._noise)
                track.counters = TrackletCounters(l_det=0, l_trk=0)
                track.state = TrackState.CONFIRMED
                track.frames_lost = 0
            else:
                track.motion = kf_update(track.motion, candidate.box, self._noise)
            if candidate.source.is_detection:
                track.counters = TrackletCounters(l_det=track.counters.l_det + 1, l_trk=0)
                track.gallery.add(embeddings[si])
            else:
                track.counters = TrackletCounters(
                    l_det=track.counters.l_det, l_trk=track.counters.l_trk + 1
                )
            track.last_frame = frame
            if track.state is TrackState.TENTATIVE and track.counters.l_det >= 2:
                track.state = TrackState.CONFIRMED

        # lifecycle of unmatched tracks
        for track in self.tracks:
            if id(track) in matched_tracks:
                continue
            if track.state is TrackState.TENTATIVE:
                track.state = TrackState.REMOVED
            elif track.state is TrackState.CONFIRMED:
                track.state = TrackState.LOST
                track.frames_lost = 1
            elif track.state is TrackState.LOST:
                track.frames_lost += 1
                if track.frames_lost > cfg.max_lost_frames:
                    track.state = TrackState.REMOVED

        # initialize new tracks from leftover detection candidates
        for si in det_sel:
            if si not in matched_sel:
                self.tracks.append(self._new_track(frame, selected[si].box, embeddings[si]))

        emitted = []
        for track in self.tracks:
            if track.state not in (TrackState.CONFIRMED, TrackState.TENTATIVE):
                continue
            try:
                emitted.append((track.track_id, to_box(track.motion)))
            except DegenerateStateError:
                logger.debug("track %d dropped at output: degenerate motion state", track.track_id)
                track.state = TrackState.REMOVED
        return FrameResult(frame=frame, tracks=tuple(emitted))


def run_sequence(
    detections_by_frame: Mapping[int, Sequence[Detection]],
    score_provider: ScoreMapProvider,
    embedding_provider: EmbeddingProvider,
    config: TrackerConfig | None = None,
    n_frames: int | None = None,
) -> list[FrameResult]:
    """Fold the tracker over a whole sequence.

    Frames run from 1 to ``n_frames`` (default: the largest detection frame);
    frames without detections still advance the tracks.
    """
    if n_frames is None:
        n_frames = max(detections_by_frame, default=0)
    tracker = Tracker(config)
    results = []
    for frame in range(1, n_frames + 1):
        results.append(
            tracker.step(frame, detections_by_frame.get(frame, ()), score_provider, embedding_provider)
        )
    return results


def run_sequence_timed(
    detections_by_frame: Mapping[int, Sequence[Detection]],
    score_provider: ScoreMapProvider,
    embedding_provider: EmbeddingProvider,
    config: TrackerConfig | None = None,
    n_frames: int | None = None,
) -> tuple[list[FrameResult], float]:
    """Like :func:`run_sequence`, also returning frames processed per second."""
    start = time.perf_counter()
    results = run_sequence(detections_by_frame, score_provider, embedding_provider, config, n_frames)
    elapsed = time.perf_counter() - start
    fps = len(results) / elapsed if elapsed > 0 else float("inf")
    return results, fps
