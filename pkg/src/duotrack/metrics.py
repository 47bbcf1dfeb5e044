"""CLEAR-style tracking metrics plus trajectory-level identity measures.

Per frame, ground truth and hypothesis boxes are matched one-to-one: matches
from the previous frame persist whenever their IoU still clears the hit
threshold, and the remainder is solved as a minimum-cost assignment on
1 - IoU. A ground truth that re-matches to a different hypothesis id than its
last known one counts as an identity switch. False positives, misses, and
switches accumulate into MOTA; identity F1/recall come from one global
bipartite matching between whole trajectories on per-frame co-location
counts.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .association import FrameResult, min_cost_match
from .core import BoundingBox, boxes_to_array, iou_matrix
from .errors import MetricsInputError

GroundTruth = Mapping[int, Sequence[tuple[int, BoundingBox]]]


@dataclass(frozen=True)
class MetricsReport:
    mota: float
    faf: float
    mt: int
    ml: int
    fp: int
    fn: int
    ids: int
    idf1: float
    idr: float
    fps: float


def _check_unique(ids: Sequence[int], kind: str, frame: int) -> None:
    if len(set(ids)) != len(ids):
        raise MetricsInputError(f"duplicate {kind} ids in frame {frame}: {sorted(ids)}")


def _apply_ignore(
    entries: list[tuple[int, BoundingBox]], regions: Sequence[BoundingBox]
) -> list[tuple[int, BoundingBox]]:
    """Drop boxes mostly covered by an ignore region (own-area overlap > 0.5)."""
    kept = []
    for ident, box in entries:
        covered = 0.0
        for region in regions:
            ix = min(box.x1, region.x1) - max(box.x0, region.x0)
            iy = min(box.y1, region.y1) - max(box.y0, region.y0)
            if ix > 0 and iy > 0:
                covered = max(covered, ix * iy / box.area)
        if covered <= 0.5:
            kept.append((ident, box))
    return kept


def evaluate(
    gt: GroundTruth,
    hyp: Sequence[FrameResult],
    iou_threshold: float = 0.5,
    *,
    ignore_regions: Mapping[int, Sequence[BoundingBox]] | None = None,
    fps: float = 0.0,
) -> MetricsReport:
    """Score hypothesis tracks against ground truth."""
    hyp_by_frame: dict[int, list[tuple[int, BoundingBox]]] = {}
    for result in hyp:
        if result.frame in hyp_by_frame:
            raise MetricsInputError(f"frame {result.frame} appears twice in the hypothesis")
        hyp_by_frame[result.frame] = list(result.tracks)

    frames = sorted(set(gt) | set(hyp_by_frame))
    fp = fn = ids = 0
    total_gt = 0
    total_hyp = 0
    prev_match: dict[int, int] = {}
    gt_present: dict[int, int] = {}
    gt_recovered: dict[int, int] = {}
    overlap_counts: dict[tuple[int, int], int] = {}

    for frame in frames:
        gt_entries = list(gt.get(frame, ()))
        hyp_entries = hyp_by_frame.get(frame, [])
        if ignore_regions is not None and frame in ignore_regions:
            regions = ignore_regions[frame]
            gt_entries = _apply_ignore(gt_entries, regions)
            hyp_entries = _apply_ignore(hyp_entries, regions)
        _check_unique([g for g, _ in gt_entries], "ground-truth", frame)
        _check_unique([h for h, _ in hyp_entries], "hypothesis", frame)
        total_gt += len(gt_entries)
        total_hyp += len(hyp_entries)
        for gid, _ in gt_entries:
            gt_present[gid] = gt_present.get(gid, 0) + 1

        if gt_entries and hyp_entries:
            overlaps = iou_matrix(
                boxes_to_array(b for _, b in gt_entries), boxes_to_array(b for _, b in hyp_entries)
            )
        else:
            overlaps = np.zeros((len(gt_entries), len(hyp_entries)))

        hit = overlaps >= iou_threshold
        for gi, (gid, _) in enumerate(gt_entries):
            for hi, (hid, _) in enumerate(hyp_entries):
                if hit[gi, hi]:
                    key = (gid, hid)
                    overlap_counts[key] = overlap_counts.get(key, 0) + 1

        # keep last frame's pairing wherever it still clears the threshold
        hyp_index = {hid: hi for hi, (hid, _) in enumerate(hyp_entries)}
        frame_matches: dict[int, int] = {}
        reserved_g: set[int] = set()
        reserved_h: set[int] = set()
        for gi, (gid, _) in enumerate(gt_entries):
            hid = prev_match.get(gid)
            if hid is None:
                continue
            hi = hyp_index.get(hid)
            if hi is not None and hi not in reserved_h and hit[gi, hi]:
                frame_matches[gid] = hid
                reserved_g.add(gi)
                reserved_h.add(hi)

        free_g = [gi for gi in range(len(gt_entries)) if gi not in reserved_g]
        free_h = [hi for hi in range(len(hyp_entries)) if hi not in reserved_h]
        if free_g and free_h:
            cost = 1.0 - overlaps[np.ix_(free_g, free_h)]
            assignment = min_cost_match(cost, 1.0 - iou_threshold)
            for ri, ci in assignment.matches:
                gid = gt_entries[free_g[ri]][0]
                hid = hyp_entries[free_h[ci]][0]
                previous = prev_match.get(gid)
                if previous is not None and previous != hid:
                    ids += 1
                frame_matches[gid] = hid

        prev_match.update(frame_matches)
        for gid in frame_matches:
            gt_recovered[gid] = gt_recovered.get(gid, 0) + 1
        fp += len(hyp_entries) - len(frame_matches)
        fn += len(gt_entries) - len(frame_matches)

    mota = 1.0 - (fp + fn + ids) / max(total_gt, 1)
    faf = fp / len(frames) if frames else 0.0

    mt = ml = 0
    for gid, present in gt_present.items():
        ratio = gt_recovered.get(gid, 0) / present
        if ratio > 0.8:
            mt += 1
        elif ratio < 0.2:
            ml += 1

    idtp = _identity_true_positives(overlap_counts)
    idf1 = 2.0 * idtp / (total_gt + total_hyp) if total_gt + total_hyp else 1.0
    idr = idtp / total_gt if total_gt else 1.0

    return MetricsReport(
        mota=mota,
        faf=faf,
        mt=mt,
        ml=ml,
        fp=fp,
        fn=fn,
        ids=ids,
        idf1=idf1,
        idr=idr,
        fps=fps,
    )


def _identity_true_positives(overlap_counts: Mapping[tuple[int, int], int]) -> int:
    """Best one-to-one trajectory pairing by total co-located frames."""
    if not overlap_counts:
        return 0
    gt_ids = sorted({g for g, _ in overlap_counts})
    hyp_ids = sorted({h for _, h in overlap_counts})
    gains = np.zeros((len(gt_ids), len(hyp_ids)))
    g_index = {g: i for i, g in enumerate(gt_ids)}
    h_index = {h: i for i, h in enumerate(hyp_ids)}
    for (g, h), count in overlap_counts.items():
        gains[g_index[g], h_index[h]] = count
    rows, cols = linear_sum_assignment(-gains)
    return int(gains[rows, cols].sum())


def format_report(report: MetricsReport) -> str:
    """Plain-text table of the report."""
    rows = [
        ("MOTA", f"{report.mota:.4f}"),
        ("FAF", f"{report.faf:.4f}"),
        ("MT", str(report.mt)),
        ("ML", str(report.ml)),
        ("FP", str(report.fp)),
        ("FN", str(report.fn)),
        ("IDS", str(report.ids)),
        ("IDF1", f"{report.idf1:.4f}"),
        ("IDR", f"{report.idr:.4f}"),
        ("FPS", f"{report.fps:.1f}"),
    ]
    width = max(len(name) for name, _ in rows)
    return "\n".join(f"{name.ljust(width)}  {value}" for name, value in rows)


def report_to_json(report: MetricsReport) -> str:
    return json.dumps(dataclasses.asdict(report), indent=2, sort_keys=True) + "\n"


def report_from_json(text: str) -> MetricsReport:
    data = json.loads(text)
    return MetricsReport(**data)
