"""Synthetic scenario generation for desk-scale tracker experiments.

A scenario is a set of objects following piecewise-linear waypoint paths.
From the exact trajectories it derives noisy detections (dropout, box jitter,
false positives), ideal score maps, and oracle appearance embeddings, all
deterministic under the scenario seed.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .appearance import OracleEmbeddingProvider
from .core import BoundingBox, Detection
from .scoremaps import SynthScoreMapProvider


@dataclass(frozen=True)
class ObjectPath:
    """One object's size and (frame, cx, cy) waypoints, frames ascending."""

    size: tuple[float, float]
    waypoints: tuple[tuple[int, float, float], ...]

    def __post_init__(self) -> None:
        if len(self.waypoints) < 1:
            raise ValueError("a path needs at least one waypoint")
        frames = [w[0] for w in self.waypoints]
        if frames != sorted(frames) or len(set(frames)) != len(frames):
            raise ValueError("waypoint frames must be strictly increasing")

    def center_at(self, frame: int) -> tuple[float, float] | None:
        """Interpolated center, or None outside the path's frame range."""
        points = self.waypoints
        if frame < points[0][0] or frame > points[-1][0]:
            return None
        for (f0, x0, y0), (f1, x1, y1) in zip(points, points[1:]):
            if f0 <= frame <= f1:
                t = (frame - f0) / (f1 - f0) if f1 > f0 else 0.0
                return x0 + t * (x1 - x0), y0 + t * (y1 - y0)
        x, y = points[-1][1], points[-1][2]
        return x, y


@dataclass(frozen=True)
class ScenarioSpec:
    frame_count: int
    frame_dims: tuple[float, float] = (640.0, 480.0)
    num_objects: int = 0
    paths: tuple[ObjectPath, ...] = ()
    detection_dropout: float = 0.0
    box_jitter_sigma: float = 0.0
    false_positive_rate: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.frame_count < 1:
            raise ValueError(f"frame_count must be >= 1, got {self.frame_count}")
        if not (0.0 <= self.detection_dropout <= 1.0):
            raise ValueError(f"detection_dropout must be in [0, 1], got {self.detection_dropout}")
        if self.box_jitter_sigma < 0:
            raise ValueError(f"box_jitter_sigma must be >= 0, got {self.box_jitter_sigma}")
        if self.false_positive_rate < 0:
            raise ValueError(f"false_positive_rate must be >= 0, got {self.false_positive_rate}")
        if not self.paths and self.num_objects < 1:
            raise ValueError("need explicit paths or num_objects >= 1")


@dataclass
class Scenario:
    """Generated scenario data plus provider factories for running it."""

    spec: ScenarioSpec
    ground_truth: dict[int, list[tuple[int, BoundingBox]]]
    detections: dict[int, list[Detection]]
    identities: dict[int, list[tuple[BoundingBox, int | None]]] = field(repr=False, default_factory=dict)

    def gt_boxes(self) -> dict[int, list[BoundingBox]]:
        return {frame: [box for _, box in entries] for frame, entries in self.ground_truth.items()}

    def score_map_provider(
        self, k: int = 7, noise_sigma: float = 0.0, scale: float = 8.0, seed: int | None = None
    ) -> SynthScoreMapProvider:
        return SynthScoreMapProvider(
            self.gt_boxes(),
            self.spec.frame_dims,
            k,
            noise_sigma,
            scale=scale,
            seed=self.spec.seed if seed is None else seed,
        )

    def embedding_provider(
        self, sigma: float = 0.0, dim: int = 512, seed: int | None = None
    ) -> OracleEmbeddingProvider:
        return OracleEmbeddingProvider(
            self.identities, sigma, self.spec.seed if seed is None else seed, dim=dim
        )


def _auto_paths(spec: ScenarioSpec) -> tuple[ObjectPath, ...]:
    rng = np.random.default_rng((spec.seed, 0xA0))
    frame_w, frame_h = spec.frame_dims
    paths = []
    for _ in range(spec.num_objects):
        w = float(rng.uniform(28.0, 56.0))
        h = float(w * rng.uniform(1.7, 2.3))
        mx, my = w / 2.0 + 2.0, h / 2.0 + 2.0
        sx, ex = rng.uniform(mx, frame_w - mx, 2)
        sy, ey = rng.uniform(my, frame_h - my, 2)
        paths.append(
            ObjectPath(size=(w, h), waypoints=((1, float(sx), float(sy)), (spec.frame_count, float(ex), float(ey))))
        )
    return tuple(paths)


def crossing_paths(
    frame_count: int,
    frame_dims: tuple[float, float] = (640.0, 480.0),
    pairs: int = 1,
    size: tuple[float, float] = (36.0, 72.0),
) -> tuple[ObjectPath, ...]:
    """Paths for 2 * pairs objects; each pair swaps corners and crosses mid-run."""
    frame_w, frame_h = frame_dims
    top = frame_h * 0.25
    bottom = frame_h * 0.75
    paths = []
    for j in range(pairs):
        left = frame_w * (j + 0.65) / (pairs + 1)
        right = left + frame_w * 0.5 / (pairs + 1)
        paths.append(ObjectPath(size=size, waypoints=((1, left, top), (frame_count, right, bottom))))
        paths.append(ObjectPath(size=size, waypoints=((1, left, bottom), (frame_count, right, top))))
    return tuple(paths)


def gen_scenario(spec: ScenarioSpec) -> Scenario:
    """Roll out trajectories and derive noisy detections, deterministically."""
    paths = spec.paths or _auto_paths(spec)
    frame_w, frame_h = spec.frame_dims

    ground_truth: dict[int, list[tuple[int, BoundingBox]]] = {}
    for frame in range(1, spec.frame_count + 1):
        entries = []
        for oid, path in enumerate(paths, start=1):
            center = path.center_at(frame)
            if center is None:
                continue
            w, h = path.size
            entries.append((oid, BoundingBox.from_center(center[0], center[1], w, h)))
        ground_truth[frame] = entries

    rng = np.random.default_rng((spec.seed, 0xD7))
    detections: dict[int, list[Detection]] = {}
    identities: dict[int, list[tuple[BoundingBox, int | None]]] = {}
    for frame in range(1, spec.frame_count + 1):
        dets: list[Detection] = []
        idents: list[tuple[BoundingBox, int | None]] = []
        for oid, box in ground_truth[frame]:
            if spec.detection_dropout > 0 and rng.uniform() < spec.detection_dropout:
                continue
            if spec.box_jitter_sigma > 0:
                dx, dy, dw, dh = rng.normal(0.0, spec.box_jitter_sigma, 4)
            else:
                dx = dy = dw = dh = 0.0
            jittered = BoundingBox(box.x0 + dx, box.y0 + dy, max(box.w + dw, 2.0), max(box.h + dh, 2.0))
            dets.append(Detection(frame=frame, box=jittered, confidence=1.0))
            idents.append((jittered, oid))
        if spec.false_positive_rate > 0:
            for _ in range(int(rng.poisson(spec.false_positive_rate))):
                w = float(rng.uniform(20.0, 60.0))
                h = float(rng.uniform(40.0, 120.0))
                x0 = float(rng.uniform(0.0, max(frame_w - w, 1.0)))
                y0 = float(rng.uniform(0.0, max(frame_h - h, 1.0)))
                fp_box = BoundingBox(x0, y0, w, h)
                dets.append(Detection(frame=frame, box=fp_box, confidence=0.5))
                idents.append((fp_box, None))
        detections[frame] = dets
        identities[frame] = idents

    return Scenario(spec=spec, ground_truth=ground_truth, detections=detections, identities=identities)


def spec_to_json(spec: ScenarioSpec) -> str:
    data = {
        "frame_count": spec.frame_count,
        "frame_dims": list(spec.frame_dims),
        "num_objects": spec.num_objects,
        "paths": [
            {"size": list(p.size), "waypoints": [list(w) for w in p.waypoints]} for p in spec.paths
        ],
        "detection_dropout": spec.detection_dropout,
        "box_jitter_sigma": spec.box_jitter_sigma,
        "false_positive_rate": spec.false_positive_rate,
        "seed": spec.seed,
    }
    return json.dumps(data, indent=2) + "\n"


def spec_from_json(text: str) -> ScenarioSpec:
    data = json.loads(text)
    paths = tuple(
        ObjectPath(
            size=tuple(p["size"]),
            waypoints=tuple((int(f), float(x), float(y)) for f, x, y in p["waypoints"]),
        )
        for p in data.get("paths", [])
    )
    return ScenarioSpec(
        frame_count=int(data["frame_count"]),
        frame_dims=tuple(data.get("frame_dims", (640.0, 480.0))),
        num_objects=int(data.get("num_objects", 0)),
        paths=paths,
        detection_dropout=float(data.get("detection_dropout", 0.0)),
        box_jitter_sigma=float(data.get("box_jitter_sigma", 0.0)),
        false_positive_rate=float(data.get("false_positive_rate", 0.0)),
        seed=int(data.get("seed", 0)),
    )
