"""Appearance embeddings, per-track galleries, and the triplet hinge loss.

Embeddings are plain 1-D float vectors compared by Euclidean distance. Each
track keeps a bounded FIFO gallery of the embeddings from its associated
detections; the distance between a track and a new embedding is the minimum
over the gallery, which stays robust to appearance change without letting the
gallery grow unboundedly.

Two providers stand in for a learned feature extractor: an oracle that maps
ground-truth identities to fixed random prototypes (plus optional noise), and
a file-backed provider serving precomputed vectors keyed by (frame, box).
"""
from __future__ import annotations

import struct
from collections import deque
from typing import BinaryIO, Iterable, Mapping, Protocol, Sequence

import numpy as np

from .core import BoundingBox
from .errors import (
    ConfigError,
    EmptyBatchError,
    EmptyGalleryError,
    FixtureFormatError,
    MissingFeatureError,
)

REID_MAGIC = b"REID"
REID_VERSION = 1
_FILE_HEADER = struct.Struct("<4sIIQ")  # magic, version, dim, count
_RECORD_HEADER = struct.Struct("<Iffff")  # frame, x0, y0, w, h

BOX_MATCH_TOLERANCE = 1.0  # pixels, per box parameter


def embedding_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Euclidean distance between two embeddings of equal dimension."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ConfigError(f"embedding dimensions differ: {a.shape} vs {b.shape}")
    return float(np.linalg.norm(a - b))


class FeatureGallery:
    """Bounded FIFO buffer of embeddings; oldest entries are evicted first."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError(f"gallery capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self._items: deque[np.ndarray] = deque(maxlen=capacity)
        self._matrix: np.ndarray | None = None
        self._sq_norms: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self._items)

    def add(self, embedding: np.ndarray) -> None:
        vec = np.asarray(embedding, dtype=np.float32).reshape(-1)
        if not np.all(np.isfinite(vec)):
            raise ValueError("embedding has non-finite components")
        if self._items and vec.shape != self._items[0].shape:
            raise ConfigError(
                f"embedding dimension {vec.shape[0]} does not match gallery dimension {self._items[0].shape[0]}"
            )
        self._items.append(vec)
        self._matrix = None
        self._sq_norms = None

    def matrix(self) -> np.ndarray:
        """Stacked gallery as a float64 (size, dim) matrix, cached."""
        if self._matrix is None:
            self._matrix = np.stack(self._items).astype(np.float64) if self._items else np.zeros((0, 0))
            self._sq_norms = np.einsum("ij,ij->i", self._matrix, self._matrix)
        return self._matrix

    def sq_norms(self) -> np.ndarray:
        self.matrix()
        assert self._sq_norms is not None
        return self._sq_norms

    def latest(self) -> np.ndarray:
        if not self._items:
            raise EmptyGalleryError("gallery holds no embeddings")
        return self._items[-1]


def gallery_distance(gallery: FeatureGallery, embedding: np.ndarray) -> float:
    """Minimum Euclidean distance from the query to any stored embedding."""
    if len(gallery) == 0:
        raise EmptyGalleryError("cannot compute distance against an empty gallery")
    query = np.asarray(embedding, dtype=np.float64).reshape(-1)
    matrix = gallery.matrix()
    if matrix.shape[1] != query.shape[0]:
        raise ConfigError(f"embedding dimensions differ: {matrix.shape[1]} vs {query.shape[0]}")
    return float(np.min(np.linalg.norm(matrix - query[None, :], axis=1)))


def triplet_loss(
    triplets: Sequence[tuple[np.ndarray, np.ndarray, np.ndarray]], m: float
) -> tuple[float, list[tuple[np.ndarray, np.ndarray, np.ndarray]]]:
    """Mean hinge loss over (anchor, positive, negative) triples, with gradients.

    Each triple contributes max(d(a,p) - d(a,n) + m, 0); triples already
    separated by more than the margin contribute nothing, to loss or gradient.
    Returns the loss and one (d/da, d/dp, d/dn) gradient triple per input.
    """
    if m <= 0:
        raise ValueError(f"margin must be positive, got {m}")
    if len(triplets) == 0:
        raise EmptyBatchError("triplet loss needs at least one triple")
    n = len(triplets)
    total = 0.0
    gradients: list[tuple[np.ndarray, np.ndarray, np.ndarray]] = []
    for anchor, positive, negative in triplets:
        a = np.asarray(anchor, dtype=np.float64)
        p = np.asarray(positive, dtype=np.float64)
        neg = np.asarray(negative, dtype=np.float64)
        if a.shape != p.shape or a.shape != neg.shape:
            raise ConfigError("triplet members must share one dimension")
        d_ap = float(np.linalg.norm(a - p))
        d_an = float(np.linalg.norm(a - neg))
        term = d_ap - d_an + m
        ga = np.zeros_like(a)
        gp = np.zeros_like(a)
        gn = np.zeros_like(a)
        if term > 0.0:
            total += term
            # subgradient 0 exactly at the hinge and at coincident points
            if d_ap > 0.0:
                u = (a - p) / d_ap
                ga += u
                gp -= u
            if d_an > 0.0:
                v = (a - neg) / d_an
                ga -= v
                gn += v
        gradients.append((ga / n, gp / n, gn / n))
    return total / n, gradients


class EmbeddingProvider(Protocol):
    """Source of appearance embeddings for boxes in frames."""

    def embed(self, frame: int, box: BoundingBox) -> np.ndarray: ...


class _BoxIndex:
    """Per-frame nearest-box lookup with a fixed per-parameter tolerance."""

    def __init__(self) -> None:
        self._params: dict[int, list[tuple[float, float, float, float]]] = {}
        self._values: dict[int, list] = {}
        self._arrays: dict[int, np.ndarray] = {}

    def add(self, frame: int, box: BoundingBox, value) -> None:
        self._params.setdefault(frame, []).append((box.x0, box.y0, box.w, box.h))
        self._values.setdefault(frame, []).append(value)
        self._arrays.pop(frame, None)

    def find(self, frame: int, box: BoundingBox):
        """Return the stored value for the closest box within tolerance, else None."""
        values = self._values.get(frame)
        if not values:
            return None
        arr = self._arrays.get(frame)
        if arr is None:
            arr = np.asarray(self._params[frame], dtype=np.float64)
            self._arrays[frame] = arr
        query = np.array([box.x0, box.y0, box.w, box.h], dtype=np.float64)
        diffs = np.abs(arr - query[None, :])
        within = np.max(diffs, axis=1) <= BOX_MATCH_TOLERANCE
        if not np.any(within):
            return None
        dist = np.einsum("ij,ij->i", diffs, diffs)
        dist[~within] = np.inf
        return values[int(np.argmin(dist))]

    def frames(self) -> list[int]:
        return list(self._values)


def _box_quantized(box: BoundingBox) -> tuple[int, int, int, int]:
    return (
        int(round(box.x0 * 8)),
        int(round(box.y0 * 8)),
        int(round(box.w * 8)),
        int(round(box.h * 8)),
    )


class OracleEmbeddingProvider:
    """Embeddings derived from ground-truth identities.

    Every identity gets a fixed random unit prototype; queries return the
    prototype of the identity owning the queried box, plus Gaussian noise of
    scale ``sigma``. Boxes without an identity (and unknown boxes) get an
    independent deterministic random vector. All outputs are reproducible
    functions of (seed, frame, box).
    """

    def __init__(
        self,
        identity_map: Mapping[int, Sequence[tuple[BoundingBox, int | None]]],
        sigma: float,
        seed: int,
        dim: int = 512,
    ):
        if sigma < 0:
            raise ValueError(f"sigma must be >= 0, got {sigma}")
        self.sigma = sigma
        self.seed = seed
        self.dim = dim
        self._index = _BoxIndex()
        self._prototypes: dict[int, np.ndarray] = {}
        for frame, pairs in identity_map.items():
            for box, identity in pairs:
                self._index.add(frame, box, (box, identity))

    def _prototype(self, identity: int) -> np.ndarray:
        proto = self._prototypes.get(identity)
        if proto is None:
            rng = np.random.default_rng((self.seed, 0x1D, identity))
            vec = rng.standard_normal(self.dim)
            proto = (vec / np.linalg.norm(vec)).astype(np.float32)
            self._prototypes[identity] = proto
        return proto

    def embed(self, frame: int, box: BoundingBox) -> np.ndarray:
        hit = self._index.find(frame, box)
        identity = hit[1] if hit is not None else None
        key_box = hit[0] if hit is not None else box
        if identity is not None:
            base = self._prototype(identity).astype(np.float64)
            if self.sigma == 0.0:
                return base.astype(np.float32)
        else:
            base = np.zeros(self.dim)
        rng = np.random.default_rng((self.seed, 0x2E, frame) + _box_quantized(key_box))
        if identity is None:
            base = rng.standard_normal(self.dim)
            base /= np.linalg.norm(base)
        noise = rng.normal(0.0, self.sigma, self.dim) if self.sigma > 0 else 0.0
        return (base + noise).astype(np.float32)


class InMemoryEmbeddingProvider:
    """Provider over explicit (frame, box, vector) records."""

    def __init__(self, records: Iterable[tuple[int, BoundingBox, np.ndarray]]):
        self._index = _BoxIndex()
        self.dim: int | None = None
        for frame, box, vec in records:
            vec = np.asarray(vec, dtype=np.float32).reshape(-1)
            if self.dim is None:
                self.dim = vec.shape[0]
            elif vec.shape[0] != self.dim:
                raise ConfigError("all stored embeddings must share one dimension")
            self._index.add(frame, box, vec)

    def embed(self, frame: int, box: BoundingBox) -> np.ndarray:
        vec = self._index.find(frame, box)
        if vec is None:
            raise MissingFeatureError(f"no stored embedding for frame {frame}, box {box}")
        return vec


class FileEmbeddingProvider(InMemoryEmbeddingProvider):
    """Provider reading a binary embedding fixture up front."""

    def __init__(self, path: str, expected_dim: int | None = None):
        super().__init__(read_embedding_file(path))
        if expected_dim is not None and self.dim is not None and self.dim != expected_dim:
            raise ConfigError(f"fixture embedding dimension {self.dim} does not match configured {expected_dim}")


def write_embedding_file(path: str, records: Sequence[tuple[int, BoundingBox, np.ndarray]]) -> None:
    if records:
        dim = int(np.asarray(records[0][2]).reshape(-1).shape[0])
    else:
        dim = 0
    with open(path, "wb") as fh:
        fh.write(_FILE_HEADER.pack(REID_MAGIC, REID_VERSION, dim, len(records)))
        for frame, box, vec in records:
            arr = np.asarray(vec, dtype="<f4").reshape(-1)
            if arr.shape[0] != dim:
                raise ConfigError("all records must share one embedding dimension")
            fh.write(_RECORD_HEADER.pack(frame, box.x0, box.y0, box.w, box.h))
            fh.write(arr.tobytes())


def read_embedding_file(path: str) -> list[tuple[int, BoundingBox, np.ndarray]]:
    with open(path, "rb") as fh:
        header = fh.read(_FILE_HEADER.size)
        if len(header) < _FILE_HEADER.size:
            raise FixtureFormatError("truncated embedding-file header")
        magic, version, dim, count = _FILE_HEADER.unpack(header)
        if magic != REID_MAGIC:
            raise FixtureFormatError(f"bad embedding-file magic: {magic!r}")
        if version != REID_VERSION:
            raise FixtureFormatError(f"unsupported embedding-file version: {version}")
        records: list[tuple[int, BoundingBox, np.ndarray]] = []
        for i in range(count):
            rec = fh.read(_RECORD_HEADER.size)
            if len(rec) < _RECORD_HEADER.size:
                raise FixtureFormatError(f"truncated embedding record {i}")
            frame, x0, y0, w, h = _RECORD_HEADER.unpack(rec)
            data = fh.read(dim * 4)
            if len(data) < dim * 4:
                raise FixtureFormatError(f"truncated embedding vector in record {i}")
            vec = np.frombuffer(data, dtype="<f4").copy()
            records.append((frame, BoundingBox(x0, y0, w, h), vec))
        return records
