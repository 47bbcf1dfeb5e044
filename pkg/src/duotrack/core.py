"""Shared domain types, box geometry, and tracker configuration.

Boxes live in continuous pixel coordinates; only the score-map pooling
step rasterizes to integer grids. All types here are immutable value
objects and safe to share across threads.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

try:
    import tomllib as _toml
except ImportError:  # Python < 3.11
    import tomli as _toml

from .errors import ConfigError


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned rectangle (x0, y0) = top-left corner, w/h > 0, in pixels."""

    x0: float
    y0: float
    w: float
    h: float

    def __post_init__(self) -> None:
        if not (self.w > 0 and self.h > 0):
            raise ValueError(f"box must have positive size, got w={self.w}, h={self.h}")

    @property
    def x1(self) -> float:
        return self.x0 + self.w

    @property
    def y1(self) -> float:
        return self.y0 + self.h

    @property
    def cx(self) -> float:
        return self.x0 + self.w / 2.0

    @property
    def cy(self) -> float:
        return self.y0 + self.h / 2.0

    @property
    def area(self) -> float:
        return self.w * self.h

    @property
    def aspect(self) -> float:
        """Width over height."""
        return self.w / self.h

    @classmethod
    def from_center(cls, cx: float, cy: float, w: float, h: float) -> "BoundingBox":
        return cls(cx - w / 2.0, cy - h / 2.0, w, h)


@dataclass(frozen=True)
class Detection:
    """A detector output for one frame."""

    frame: int
    box: BoundingBox
    confidence: float = 1.0


@dataclass(frozen=True)
class CandidateSource:
    """Where a candidate box came from: the detector, or one track's prediction.

    ``track_id is None`` means the candidate is a detection.
    """

    track_id: int | None = None

    @property
    def is_detection(self) -> bool:
        return self.track_id is None

    @classmethod
    def detection(cls) -> "CandidateSource":
        return cls(None)

    @classmethod
    def from_track(cls, track_id: int) -> "CandidateSource":
        return cls(track_id)


@dataclass(frozen=True)
class Candidate:
    """A scored box competing for association.

    ``unified_score`` equals ``classifier_prob`` for detection candidates and
    ``classifier_prob * tracklet_confidence`` for track-prediction candidates,
    so it never exceeds ``classifier_prob``.
    """

    box: BoundingBox
    source: CandidateSource
    classifier_prob: float
    unified_score: float


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union of two boxes; 0 for disjoint or edge-touching."""
    ix = min(a.x1, b.x1) - max(a.x0, b.x0)
    iy = min(a.y1, b.y1) - max(a.y0, b.y0)
    if ix <= 0.0 or iy <= 0.0:
        return 0.0
    inter = ix * iy
    return inter / (a.area + b.area - inter)


def boxes_to_array(boxes: Iterable[BoundingBox]) -> np.ndarray:
    """Stack boxes into an (n, 4) float array of (x0, y0, w, h) rows."""
    return np.array([(b.x0, b.y0, b.w, b.h) for b in boxes], dtype=np.float64).reshape(-1, 4)


def iou_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise IoU between (n, 4) and (m, 4) arrays of (x0, y0, w, h) boxes."""
    a = np.asarray(a, dtype=np.float64).reshape(-1, 4)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 4)
    ax1 = a[:, 0] + a[:, 2]
    ay1 = a[:, 1] + a[:, 3]
    bx1 = b[:, 0] + b[:, 2]
    by1 = b[:, 1] + b[:, 3]
    ix = np.minimum(ax1[:, None], bx1[None, :]) - np.maximum(a[:, None, 0], b[None, :, 0])
    iy = np.minimum(ay1[:, None], by1[None, :]) - np.maximum(a[:, None, 1], b[None, :, 1])
    inter = np.clip(ix, 0.0, None) * np.clip(iy, 0.0, None)
    area_a = a[:, 2] * a[:, 3]
    area_b = b[:, 2] * b[:, 3]
    union = area_a[:, None] + area_b[None, :] - inter
    out = np.zeros_like(inter)
    np.divide(inter, union, out=out, where=union > 0)
    # edge-touching boxes have zero intersection area, keep exact zero
    out[inter <= 0.0] = 0.0
    return out


@dataclass(frozen=True)
class TrackerConfig:
    """All tunable knobs of the tracking engine.

    Thresholds follow the candidate-selection and association stages:
    ``tau_nms``/``tau_s`` gate candidate selection, ``tau_d`` gates the
    appearance stage, ``tau_iou`` gates the IoU stage. ``alpha`` controls how
    fast tracklet confidence decays with prediction-only associations and
    ``margin_m`` is the triplet-loss margin. The ``kf_*`` coefficients scale
    the motion filter's noise with the current box height.
    """

    k: int = 7
    tau_nms: float = 0.3
    tau_s: float = 0.4
    tau_d: float = 0.4
    tau_iou: float = 0.3
    alpha: float = 0.05
    margin_m: float = 0.2
    max_lost_frames: int = 30
    gallery_capacity: int = 100
    embedding_dim: int = 512
    normalize_embeddings: bool = False
    enable_track_candidates: bool = True
    enable_appearance_stage: bool = True
    kf_pos_std: float = 1.0 / 20.0
    kf_vel_std: float = 1.0 / 160.0
    kf_meas_std: float = 1.0 / 20.0
    kf_init_vel_std: float = 1.0 / 16.0

    def __post_init__(self) -> None:
        validate_config(self)


_THRESHOLD_KEYS = ("tau_nms", "tau_s", "tau_d", "tau_iou")
_POSITIVE_KEYS = ("alpha", "margin_m", "kf_pos_std", "kf_vel_std", "kf_meas_std", "kf_init_vel_std")
_INT_KEYS = {"k": 1, "max_lost_frames": 0, "gallery_capacity": 1, "embedding_dim": 1}
_BOOL_KEYS = ("normalize_embeddings", "enable_track_candidates", "enable_appearance_stage")


def validate_config(cfg: TrackerConfig) -> None:
    """Raise :class:`ConfigError` naming the offending key, if any."""
    for key in _THRESHOLD_KEYS:
        value = getattr(cfg, key)
        if not (0.0 <= value <= 1.0):
            raise ConfigError(f"config value out of range: {key} = {value} (must be in [0, 1])")
    for key in _POSITIVE_KEYS:
        value = getattr(cfg, key)
        if not value > 0:
            raise ConfigError(f"config value out of range: {key} = {value} (must be > 0)")
    for key, lo in _INT_KEYS.items():
        value = getattr(cfg, key)
        if not isinstance(value, int) or isinstance(value, bool) or value < lo:
            raise ConfigError(f"config value out of range: {key} = {value!r} (integer >= {lo})")
    for key in _BOOL_KEYS:
        if not isinstance(getattr(cfg, key), bool):
            raise ConfigError(f"config value out of range: {key} must be a boolean")


def parse_config(text: str) -> TrackerConfig:
    """Parse a flat ``key = value`` document into a config.

    Absent keys take their defaults, unknown keys are rejected, and all
    invariants are validated.
    """
    try:
        raw = _toml.loads(text)
    except _toml.TOMLDecodeError as exc:
        raise ConfigError(f"config parse error: {exc}") from exc

    field_types = {f.name: f.type for f in dataclasses.fields(TrackerConfig)}
    values: dict[str, object] = {}
    for key, value in raw.items():
        if key not in field_types:
            raise ConfigError(f"unknown config key: {key!r}")
        if key in _INT_KEYS or key in _BOOL_KEYS:
            values[key] = value  # validated by validate_config
        elif isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"config value for {key!r} must be a number, got {value!r}")
        else:
            values[key] = float(value)
    return TrackerConfig(**values)  # type: ignore[arg-type]


def serialize_config(cfg: TrackerConfig) -> str:
    """Render a config back to its flat key-value text form.

    ``parse_config(serialize_config(c))`` equals ``c``.
    """
    lines = []
    for f in dataclasses.fields(TrackerConfig):
        value = getattr(cfg, f.name)
        if isinstance(value, bool):
            rendered = "true" if value else "false"
        elif isinstance(value, float):
            rendered = repr(value)
        else:
            rendered = str(value)
        lines.append(f"{f.name} = {rendered}")
    return "\n".join(lines) + "\n"


def load_config(path: str) -> TrackerConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())
