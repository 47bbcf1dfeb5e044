"""Position-sensitive score-map pooling.

A frame's classifier output is a stack of k*k score planes at a reduced
resolution (``scale`` pixels per map cell). Plane ``i`` is trained (or, here,
synthesized) to respond to the i-th spatial sub-region of an object, counting
sub-regions row-major from the top-left. To classify a box, its covered cell
span is split into a k-by-k grid of bins; bin ``i`` accumulates plane ``i``
over its own cells only, and the classification probability is the sigmoid of
the mean accumulated response. Averaging each bin against its own plane is
what makes the score position-sensitive: a box covering half an object reads
the wrong planes over half its bins and scores lower than the exact box.

Bin boundaries partition the covered cell span into k contiguous ranges whose
sizes differ by at most one. Boxes partially outside the map are clipped
first; boxes entirely outside raise :class:`OutOfBoundsError`.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from typing import BinaryIO, Iterable, Mapping, Protocol, Sequence

import numpy as np
from scipy.special import expit

from .core import BoundingBox
from .errors import FixtureFormatError, MissingFeatureError, OutOfBoundsError

SMAP_MAGIC = b"SMAP"
SMAP_VERSION = 1
_HEADER = struct.Struct("<4sIIIIIf")  # magic, version, frame, k, width, height, scale


@dataclass(eq=False)
class ScoreMapGrid:
    """Immutable stack of k*k score planes covering one frame.

    ``planes`` has shape (k*k, height, width); ``scale`` maps frame pixels to
    map cells (pixels per cell).
    """

    k: int
    width: int
    height: int
    scale: float
    planes: np.ndarray
    _integrals: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError(f"grid size must be >= 1, got k={self.k}")
        if self.scale <= 0:
            raise ValueError(f"scale must be positive, got {self.scale}")
        planes = np.ascontiguousarray(self.planes, dtype=np.float32)
        expected = (self.k * self.k, self.height, self.width)
        if planes.shape != expected:
            raise ValueError(f"planes shape {planes.shape} does not match {expected}")
        planes.flags.writeable = False
        self.planes = planes

    @property
    def integrals(self) -> np.ndarray:
        """Per-plane 2-D inclusive prefix sums, zero-padded, float64.

        Lets any rectangular bin sum be read with four lookups.
        """
        if self._integrals is None:
            k2 = self.k * self.k
            acc = np.zeros((k2, self.height + 1, self.width + 1), dtype=np.float64)
            acc[:, 1:, 1:] = self.planes
            np.cumsum(acc, axis=1, out=acc)
            np.cumsum(acc, axis=2, out=acc)
            self._integrals = acc
        return self._integrals


class ScoreMapProvider(Protocol):
    """Source of score-map grids, one per frame."""

    def score_maps(self, frame: int) -> ScoreMapGrid: ...


def cell_span(maps: ScoreMapGrid, roi: BoundingBox) -> tuple[int, int, int, int] | None:
    """Covered cell ranges (c0, c1, r0, r1) of a box after clipping.

    Returns ``None`` when the clipped box has no extent on the map. A cell is
    covered when the clipped box intersects it with positive length on both
    axes, i.e. columns floor(x0) .. ceil(x1) of the box in cell coordinates.
    """
    x0 = max(roi.x0 / maps.scale, 0.0)
    x1 = min(roi.x1 / maps.scale, float(maps.width))
    y0 = max(roi.y0 / maps.scale, 0.0)
    y1 = min(roi.y1 / maps.scale, float(maps.height))
    if x1 <= x0 or y1 <= y0:
        return None
    c0 = int(math.floor(x0))
    c1 = int(math.ceil(x1))
    r0 = int(math.floor(y0))
    r1 = int(math.ceil(y1))
    return c0, c1, r0, r1


def _bin_edges(start: np.ndarray, count: np.ndarray, k: int) -> np.ndarray:
    """Edges splitting ``count`` cells from ``start`` into k near-equal ranges."""
    j = np.arange(k + 1, dtype=np.int64)
    return start[:, None] + (j[None, :] * count[:, None]) // k


def classify_rois(maps: ScoreMapGrid, rois: Sequence[BoundingBox]) -> np.ndarray:
    """Classification probability for each box, vectorized over boxes."""
    if len(rois) == 0:
        return np.zeros(0, dtype=np.float64)
    spans = []
    for i, roi in enumerate(rois):
        span = cell_span(maps, roi)
        if span is None:
            raise OutOfBoundsError(f"roi {i} ({roi}) lies outside the score-map extent")
        spans.append(span)
    arr = np.asarray(spans, dtype=np.int64)
    c0, c1, r0, r1 = arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3]
    k = maps.k
    cedges = _bin_edges(c0, c1 - c0, k)  # (m, k+1)
    redges = _bin_edges(r0, r1 - r0, k)
    plane = np.arange(k * k)
    by, bx = divmod(plane, k)
    rr0 = redges[:, by]
    rr1 = redges[:, by + 1]
    cc0 = cedges[:, bx]
    cc1 = cedges[:, bx + 1]
    integral = maps.integrals
    sums = (
        integral[plane, rr1, cc1]
        - integral[plane, rr0, cc1]
        - integral[plane, rr1, cc0]
        + integral[plane, rr0, cc0]
    )
    cells = (c1 - c0) * (r1 - r0)
    return expit(sums.sum(axis=1) / cells)


def classify_roi(maps: ScoreMapGrid, roi: BoundingBox) -> float:
    """Classification probability of one box, in (0, 1)."""
    return float(classify_rois(maps, [roi])[0])


def classify_roi_naive(maps: ScoreMapGrid, roi: BoundingBox) -> float:
    """Reference implementation: literal per-cell loops over every bin.

    Slow on purpose; used in tests as an independent check of the pooling
    arithmetic.
    """
    x0 = max(roi.x0 / maps.scale, 0.0)
    x1 = min((roi.x0 + roi.w) / maps.scale, float(maps.width))
    y0 = max(roi.y0 / maps.scale, 0.0)
    y1 = min((roi.y0 + roi.h) / maps.scale, float(maps.height))
    if x1 <= x0 or y1 <= y0:
        raise OutOfBoundsError(f"roi {roi} lies outside the score-map extent")
    c0 = math.floor(x0)
    c1 = math.ceil(x1)
    r0 = math.floor(y0)
    r1 = math.ceil(y1)
    ncols = c1 - c0
    nrows = r1 - r0
    k = maps.k
    total = 0.0
    for by in range(k):
        row_start = r0 + (by * nrows) // k
        row_end = r0 + ((by + 1) * nrows) // k
        for bx in range(k):
            col_start = c0 + (bx * ncols) // k
            col_end = c0 + ((bx + 1) * ncols) // k
            plane = maps.planes[by * k + bx]
            for r in range(row_start, row_end):
                for c in range(col_start, col_end):
                    total += float(plane[r, c])
    mean = total / (ncols * nrows)
    return 1.0 / (1.0 + math.exp(-mean))


def synth_score_maps(
    ground_truth: Iterable[BoundingBox],
    frame_dims: tuple[float, float],
    k: int,
    noise_sigma: float,
    *,
    scale: float = 8.0,
    seed: int = 0,
    amplitude: float = 4.0,
    background: float = -4.0,
) -> ScoreMapGrid:
    """Build score maps with ideal position-sensitive responses.

    Plane ``i`` carries ``amplitude`` over the i-th sub-region of every
    ground-truth box and ``background`` elsewhere, plus optional Gaussian
    noise. Deterministic for a given seed.
    """
    frame_w, frame_h = frame_dims
    if frame_w <= 0 or frame_h <= 0:
        raise ValueError(f"frame dims must be positive, got {frame_dims}")
    width = int(math.ceil(frame_w / scale))
    height = int(math.ceil(frame_h / scale))
    planes = np.full((k * k, height, width), background, dtype=np.float64)
    probe = ScoreMapGrid(k=k, width=width, height=height, scale=scale, planes=np.zeros((k * k, height, width), dtype=np.float32))
    for box in ground_truth:
        span = cell_span(probe, box)
        if span is None:
            continue
        c0, c1, r0, r1 = span
        cedges = _bin_edges(np.array([c0]), np.array([c1 - c0]), k)[0]
        redges = _bin_edges(np.array([r0]), np.array([r1 - r0]), k)[0]
        for by in range(k):
            for bx in range(k):
                planes[by * k + bx, redges[by] : redges[by + 1], cedges[bx] : cedges[bx + 1]] = amplitude
    if noise_sigma > 0:
        rng = np.random.default_rng(seed)
        planes = planes + rng.normal(0.0, noise_sigma, size=planes.shape)
    return ScoreMapGrid(k=k, width=width, height=height, scale=scale, planes=planes.astype(np.float32))


def write_score_map_record(fh: BinaryIO, frame: int, grid: ScoreMapGrid) -> None:
    fh.write(_HEADER.pack(SMAP_MAGIC, SMAP_VERSION, frame, grid.k, grid.width, grid.height, grid.scale))
    fh.write(np.ascontiguousarray(grid.planes, dtype="<f4").tobytes())


def read_score_map_record(fh: BinaryIO) -> tuple[int, ScoreMapGrid] | None:
    """Read one record; ``None`` at a clean end of file."""
    header = fh.read(_HEADER.size)
    if not header:
        return None
    if len(header) < _HEADER.size:
        raise FixtureFormatError("truncated score-map header")
    magic, version, frame, k, width, height, scale = _HEADER.unpack(header)
    if magic != SMAP_MAGIC:
        raise FixtureFormatError(f"bad score-map magic: {magic!r}")
    if version != SMAP_VERSION:
        raise FixtureFormatError(f"unsupported score-map version: {version}")
    count = k * k * width * height
    data = fh.read(count * 4)
    if len(data) < count * 4:
        raise FixtureFormatError(f"truncated score-map data for frame {frame}")
    planes = np.frombuffer(data, dtype="<f4").reshape(k * k, height, width)
    return frame, ScoreMapGrid(k=k, width=width, height=height, scale=scale, planes=planes.copy())


def write_score_map_file(path: str, grids: Mapping[int, ScoreMapGrid]) -> None:
    with open(path, "wb") as fh:
        for frame in sorted(grids):
            write_score_map_record(fh, frame, grids[frame])


def read_score_map_file(path: str) -> dict[int, ScoreMapGrid]:
    grids: dict[int, ScoreMapGrid] = {}
    with open(path, "rb") as fh:
        while True:
            record = read_score_map_record(fh)
            if record is None:
                return grids
            frame, grid = record
            grids[frame] = grid


class InMemoryScoreMapProvider:
    """Provider backed by a prebuilt frame-to-grid mapping."""

    def __init__(self, grids: Mapping[int, ScoreMapGrid]):
        self._grids = dict(grids)

    def score_maps(self, frame: int) -> ScoreMapGrid:
        try:
            return self._grids[frame]
        except KeyError:
            raise MissingFeatureError(f"no score maps stored for frame {frame}") from None


class FileScoreMapProvider(InMemoryScoreMapProvider):
    """Provider reading a whole fixture file up front."""

    def __init__(self, path: str):
        super().__init__(read_score_map_file(path))


class SynthScoreMapProvider:
    """Provider generating ideal maps from per-frame ground truth, cached."""

    def __init__(
        self,
        ground_truth: Mapping[int, Sequence[BoundingBox]],
        frame_dims: tuple[float, float],
        k: int,
        noise_sigma: float = 0.0,
        *,
        scale: float = 8.0,
        seed: int = 0,
    ):
        self._gt = {f: tuple(boxes) for f, boxes in ground_truth.items()}
        self._frame_dims = frame_dims
        self._k = k
        self._noise_sigma = noise_sigma
        self._scale = scale
        self._seed = seed
        self._cache: dict[int, ScoreMapGrid] = {}

    def score_maps(self, frame: int) -> ScoreMapGrid:
        grid = self._cache.get(frame)
        if grid is None:
            grid = synth_score_maps(
                self._gt.get(frame, ()),
                self._frame_dims,
                self._k,
                self._noise_sigma,
                scale=self._scale,
                seed=(self._seed * 1_000_003 + frame) & 0x7FFFFFFF,
            )
            self._cache[frame] = grid
        return grid
