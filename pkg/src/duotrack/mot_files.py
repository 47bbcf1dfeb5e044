"""Reading and writing the comma-separated tracking file layout.

Each line is ``frame,id,bb_left,bb_top,bb_width,bb_height,conf,x,y,z``; the
trailing world coordinates are accepted but ignored. An id of -1 marks a
detection without identity. Boxes with non-positive size are rejected with a
warning rather than failing the whole file.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Mapping, Sequence

from .association import FrameResult
from .core import BoundingBox, Detection
from .errors import MotParseError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MotRecord:
    track_id: int
    box: BoundingBox
    confidence: float


def parse_mot(path: str) -> dict[int, list[MotRecord]]:
    """Parse a tracking CSV into records grouped and sorted by frame."""
    records: dict[int, list[MotRecord]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            fields = line.split(",")
            if len(fields) < 7:
                raise MotParseError(f"{path}:{lineno}: expected at least 7 fields, got {len(fields)}")
            try:
                frame = int(float(fields[0]))
                track_id = int(float(fields[1]))
                x0, y0, w, h = (float(v) for v in fields[2:6])
                conf = float(fields[6])
            except ValueError as exc:
                raise MotParseError(f"{path}:{lineno}: {exc}") from exc
            if frame < 1:
                raise MotParseError(f"{path}:{lineno}: frame index must be >= 1, got {frame}")
            if w <= 0 or h <= 0:
                logger.warning("%s:%d: rejected record with non-positive box size", path, lineno)
                continue
            records.setdefault(frame, []).append(MotRecord(track_id, BoundingBox(x0, y0, w, h), conf))
    return {frame: records[frame] for frame in sorted(records)}


def detections_from_records(records: Mapping[int, Sequence[MotRecord]]) -> dict[int, list[Detection]]:
    return {
        frame: [Detection(frame=frame, box=r.box, confidence=r.confidence) for r in recs]
        for frame, recs in records.items()
    }


def ground_truth_from_records(
    records: Mapping[int, Sequence[MotRecord]]
) -> dict[int, list[tuple[int, BoundingBox]]]:
    return {frame: [(r.track_id, r.box) for r in recs] for frame, recs in records.items()}


def load_detections(path: str) -> dict[int, list[Detection]]:
    return detections_from_records(parse_mot(path))


def load_ground_truth(path: str) -> dict[int, list[tuple[int, BoundingBox]]]:
    return ground_truth_from_records(parse_mot(path))


def results_from_records(records: Mapping[int, Sequence[MotRecord]]) -> list[FrameResult]:
    return [
        FrameResult(frame=frame, tracks=tuple((r.track_id, r.box) for r in recs))
        for frame, recs in sorted(records.items())
    ]


def write_mot(results: Sequence[FrameResult], path: str) -> None:
    """Write tracking results with two-decimal box coordinates.

    Rows are ordered by frame, then ascending track id, so output files are
    reproducible.
    """
    with open(path, "w", encoding="utf-8") as fh:
        for result in sorted(results, key=lambda r: r.frame):
            for track_id, box in sorted(result.tracks):
                fh.write(
                    f"{result.frame},{track_id},{box.x0:.2f},{box.y0:.2f},{box.w:.2f},{box.h:.2f},1,-1,-1,-1\n"
                )


def write_mot_ground_truth(gt: Mapping[int, Sequence[tuple[int, BoundingBox]]], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for frame in sorted(gt):
            for gt_id, box in sorted(gt[frame]):
                fh.write(f"{frame},{gt_id},{box.x0:.2f},{box.y0:.2f},{box.w:.2f},{box.h:.2f},1,-1,-1,-1\n")


def write_mot_detections(detections: Mapping[int, Sequence[Detection]], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for frame in sorted(detections):
            for det in detections[frame]:
                b = det.box
                fh.write(f"{frame},-1,{b.x0:.2f},{b.y0:.2f},{b.w:.2f},{b.h:.2f},{det.confidence:.4f},-1,-1,-1\n")
