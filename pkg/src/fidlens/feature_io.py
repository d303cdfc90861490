"""Binary feature-file container and the Gaussian-stats sidecar format.

The feature container is the one cross-language surface of the toolkit:
writers in any language produce identical bytes for identical payloads,
and readers validate every content invariant on load.

Byte layout (all integers little-endian):

    [ 0.. 4)  magic "FIDL"
    [ 4.. 8)  version, u32 (currently 1)
    [ 8..16)  payload kind, u64 (see FeatureKind)
    [16..24)  n, u64 (rows)
    [24..32)  d, u64 (feature dimension)
    [32..40)  n_classes, u64 (0 when no probabilities block)
    [40..48)  channels k, u64 (0 when no activations block)
    [48..56)  spatial s, u64 (0 when no activations block)
    [56..64)  flags, u64: bit0 probabilities, bit1 activations, bit2 image IDs

followed by the payload blocks in order: features (always), then
probabilities, activations, image IDs for each set flag bit.  Every block
is preceded by its u64 byte length.  Numeric blocks are float32,
row-major; activations are chunked per image (n contiguous k*s*s chunks)
so single images can be read by seeking.  The image-ID block holds n
entries, each a u32 byte length plus UTF-8 bytes.

Gaussian statistics use a sibling fixed layout: magic "FIDS", u32
version, then kind, count and d as u64, followed by the float64 mean and
covariance (no length prefixes; sizes follow from the header).
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, ValidationError
from .stats import GaussianStats

__all__ = [
    "FeatureKind",
    "FeaturePayload",
    "ConsistencyReport",
    "write_feature_file",
    "read_feature_file",
    "validate_activation_consistency",
    "write_stats_file",
    "read_stats_file",
    "is_stats_file",
]

MAGIC = b"FIDL"
STATS_MAGIC = b"FIDS"
VERSION = 1

PROB_SUM_TOL = 1e-4
ACTIVATION_TOL = 1e-5


class FeatureKind(enum.IntEnum):
    GENERIC = 0
    PRE_LOGITS = 1
    LOGITS = 2
    PROBABILITIES = 3
    BINARIZED = 4

    @classmethod
    def from_name(cls, name: str) -> "FeatureKind":
        key = name.strip().lower().replace("_", "-")
        table = {
            "generic": cls.GENERIC,
            "pre-logits": cls.PRE_LOGITS,
            "logits": cls.LOGITS,
            "probabilities": cls.PROBABILITIES,
            "binarized": cls.BINARIZED,
        }
        if key not in table:
            raise ValidationError(f"unknown payload kind {name!r}", block="header")
        return table[key]

    @property
    def label(self) -> str:
        return self.name.lower().replace("_", "-")


FLAG_PROBABILITIES = 1
FLAG_ACTIVATIONS = 2
FLAG_IMAGE_IDS = 4


@dataclass
class FeaturePayload:
    """In-memory view of one feature file.

    ``features`` is (n, d) float32; the optional blocks are (n, C)
    probabilities, (n, k, s, s) activation tensors and per-row image IDs.
    """

    kind: FeatureKind
    features: np.ndarray
    probabilities: np.ndarray | None = None
    activations: np.ndarray | None = None
    image_ids: list[str] | None = None

    @property
    def count(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]


def _validate_payload(payload: FeaturePayload) -> None:
    feats = payload.features
    if feats.ndim != 2:
        raise ValidationError(
            f"features must be 2-D, got shape {feats.shape}", block="features"
        )
    if not np.isfinite(feats).all():
        raise ValidationError("features contain non-finite values", block="features")
    n = feats.shape[0]

    probs = payload.probabilities
    if probs is not None:
        if probs.ndim != 2 or probs.shape[0] != n:
            raise ValidationError(
                f"probabilities must be ({n}, C), got shape {probs.shape}",
                block="probabilities",
            )
        if not np.isfinite(probs).all():
            raise ValidationError(
                "probabilities contain non-finite values", block="probabilities"
            )
        if probs.size and (probs.min() < -PROB_SUM_TOL or probs.max() > 1 + PROB_SUM_TOL):
            raise ValidationError(
                "probabilities fall outside [0, 1]", block="probabilities"
            )
        if n:
            sums = probs.astype(np.float64).sum(axis=1)
            worst = int(np.abs(sums - 1.0).argmax())
            if abs(sums[worst] - 1.0) > PROB_SUM_TOL:
                raise ValidationError(
                    f"probability row {worst} sums to {sums[worst]:.6f}, expected 1",
                    block="probabilities",
                )

    acts = payload.activations
    if acts is not None:
        if acts.ndim != 4 or acts.shape[0] != n or acts.shape[2] != acts.shape[3]:
            raise ValidationError(
                f"activations must be ({n}, k, s, s), got shape {acts.shape}",
                block="activations",
            )
        if not np.isfinite(acts).all():
            raise ValidationError(
                "activations contain non-finite values", block="activations"
            )
        if acts.shape[1] != payload.dim and payload.kind == FeatureKind.PRE_LOGITS:
            raise ValidationError(
                f"activation channels {acts.shape[1]} do not match feature dim {payload.dim}",
                block="activations",
            )
        if payload.kind == FeatureKind.PRE_LOGITS:
            report = validate_activation_consistency(payload)
            if not report.passed:
                idx, channel, dev = report.failures[0]
                raise ValidationError(
                    f"activation averages disagree with features "
                    f"(image {idx}, channel {channel}, deviation {dev:.2e})",
                    block="activations",
                )

    ids = payload.image_ids
    if ids is not None and len(ids) != n:
        raise ValidationError(
            f"expected {n} image IDs, got {len(ids)}", block="image-ids"
        )


def write_feature_file(path, payload: FeaturePayload) -> None:
    """Serialize a validated payload; identical payloads give identical bytes."""
    feats = np.ascontiguousarray(payload.features, dtype=np.float32)
    probs = (
        np.ascontiguousarray(payload.probabilities, dtype=np.float32)
        if payload.probabilities is not None
        else None
    )
    acts = (
        np.ascontiguousarray(payload.activations, dtype=np.float32)
        if payload.activations is not None
        else None
    )
    stored = FeaturePayload(
        kind=payload.kind,
        features=feats,
        probabilities=probs,
        activations=acts,
        image_ids=payload.image_ids,
    )
    _validate_payload(stored)

    n, d = feats.shape
    n_classes = probs.shape[1] if probs is not None else 0
    channels = acts.shape[1] if acts is not None else 0
    spatial = acts.shape[2] if acts is not None else 0
    flags = 0
    if probs is not None:
        flags |= FLAG_PROBABILITIES
    if acts is not None:
        flags |= FLAG_ACTIVATIONS
    if stored.image_ids is not None:
        flags |= FLAG_IMAGE_IDS

    parts = [
        MAGIC,
        struct.pack("<I", VERSION),
        struct.pack("<6Q", int(stored.kind), n, d, n_classes, channels, spatial),
        struct.pack("<Q", flags),
    ]

    def add_block(raw: bytes):
        parts.append(struct.pack("<Q", len(raw)))
        parts.append(raw)

    add_block(feats.tobytes())
    if probs is not None:
        add_block(probs.tobytes())
    if acts is not None:
        add_block(acts.tobytes())
    if stored.image_ids is not None:
        chunks = []
        for image_id in stored.image_ids:
            raw = image_id.encode("utf-8")
            chunks.append(struct.pack("<I", len(raw)))
            chunks.append(raw)
        add_block(b"".join(chunks))

    Path(path).write_bytes(b"".join(parts))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.offset = 0

    def take(self, size: int, what: str) -> bytes:
        if self.offset + size > len(self.data):
            raise FormatError(
                f"truncated file: {what} needs {size} bytes at offset {self.offset}, "
                f"only {len(self.data) - self.offset} remain",
                offset=self.offset,
            )
        raw = self.data[self.offset : self.offset + size]
        self.offset += size
        return raw

    def u64(self, what: str) -> int:
        return struct.unpack("<Q", self.take(8, what))[0]

    def block(self, expected: int, what: str) -> bytes:
        at = self.offset
        length = self.u64(f"{what} length")
        if length != expected:
            raise FormatError(
                f"{what} block declares {length} bytes, expected {expected}",
                offset=at,
            )
        return self.take(length, what)


def read_feature_file(path) -> FeaturePayload:
    """Parse and validate a feature file; raises on any malformed content."""
    data = Path(path).read_bytes()
    r = _Reader(data)

    magic = r.take(4, "magic")
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}", offset=0)
    version = struct.unpack("<I", r.take(4, "version"))[0]
    if version != VERSION:
        raise FormatError(f"unsupported version {version}", offset=4)
    kind_raw = r.u64("kind")
    try:
        kind = FeatureKind(kind_raw)
    except ValueError:
        raise FormatError(f"unknown payload kind {kind_raw}", offset=8) from None
    n = r.u64("n")
    d = r.u64("d")
    n_classes = r.u64("n_classes")
    channels = r.u64("channels")
    spatial = r.u64("spatial")
    flags = r.u64("flags")
    if flags & ~(FLAG_PROBABILITIES | FLAG_ACTIVATIONS | FLAG_IMAGE_IDS):
        raise FormatError(f"unknown flag bits in {flags:#x}", offset=56)

    def read_f32(shape, what: str) -> np.ndarray:
        count = int(np.prod(shape, dtype=np.int64))
        raw = r.block(count * 4, what)
        return np.frombuffer(raw, dtype="<f4").reshape(shape).copy()

    features = read_f32((n, d), "features")
    probabilities = None
    if flags & FLAG_PROBABILITIES:
        if n_classes == 0:
            raise FormatError("probabilities flag set but n_classes is 0", offset=32)
        probabilities = read_f32((n, n_classes), "probabilities")
    activations = None
    if flags & FLAG_ACTIVATIONS:
        if channels == 0 or spatial == 0:
            raise FormatError("activations flag set but channels/spatial are 0", offset=40)
        activations = read_f32((n, channels, spatial, spatial), "activations")
    image_ids = None
    if flags & FLAG_IMAGE_IDS:
        at = r.offset
        length = r.u64("image-ids length")
        raw = r.take(length, "image-ids")
        image_ids = []
        pos = 0
        for i in range(n):
            if pos + 4 > len(raw):
                raise FormatError(
                    f"truncated image-id entry {i}", offset=at + 8 + pos
                )
            (id_len,) = struct.unpack_from("<I", raw, pos)
            pos += 4
            if pos + id_len > len(raw):
                raise FormatError(
                    f"truncated image-id entry {i}", offset=at + 8 + pos
                )
            image_ids.append(raw[pos : pos + id_len].decode("utf-8"))
            pos += id_len
        if pos != len(raw):
            raise FormatError(
                f"{len(raw) - pos} trailing bytes in the image-id block",
                offset=at + 8 + pos,
            )

    if r.offset != len(data):
        raise FormatError(
            f"{len(data) - r.offset} trailing bytes after the last block",
            offset=r.offset,
        )

    payload = FeaturePayload(
        kind=kind,
        features=features,
        probabilities=probabilities,
        activations=activations,
        image_ids=image_ids,
    )
    _validate_payload(payload)
    return payload


@dataclass
class ConsistencyReport:
    """Result of checking activation spatial averages against feature rows."""

    passed: bool
    tolerance: float
    deviations: np.ndarray
    worst_channels: np.ndarray
    failures: list[tuple[int, int, float]]


def validate_activation_consistency(payload: FeaturePayload) -> ConsistencyReport:
    """Per-image check that mean-pooled activations reproduce the features.

    The deviation is measured relative to each image's feature scale; an
    empty payload passes vacuously.
    """
    if payload.activations is None:
        raise ValidationError("payload has no activations block", block="activations")
    feats = payload.features.astype(np.float64)
    pooled = payload.activations.astype(np.float64).mean(axis=(2, 3))
    if pooled.shape != feats.shape:
        raise ValidationError(
            f"pooled activations {pooled.shape} do not match features {feats.shape}",
            block="activations",
        )
    n = feats.shape[0]
    if n == 0:
        return ConsistencyReport(
            passed=True,
            tolerance=ACTIVATION_TOL,
            deviations=np.zeros(0),
            worst_channels=np.zeros(0, dtype=int),
            failures=[],
        )
    scale = np.maximum(np.abs(feats).max(axis=1), 1e-12)
    rel = np.abs(pooled - feats) / scale[:, None]
    worst_channels = rel.argmax(axis=1)
    deviations = rel.max(axis=1)
    failures = [
        (int(i), int(worst_channels[i]), float(deviations[i]))
        for i in np.nonzero(deviations > ACTIVATION_TOL)[0]
    ]
    return ConsistencyReport(
        passed=not failures,
        tolerance=ACTIVATION_TOL,
        deviations=deviations,
        worst_channels=worst_channels,
        failures=failures,
    )


def write_stats_file(path, stats: GaussianStats, kind: FeatureKind = FeatureKind.GENERIC) -> None:
    mean = np.ascontiguousarray(stats.mean, dtype="<f8")
    cov = np.ascontiguousarray(stats.cov, dtype="<f8")
    parts = [
        STATS_MAGIC,
        struct.pack("<I", VERSION),
        struct.pack("<3Q", int(kind), stats.count, stats.dim),
        mean.tobytes(),
        cov.tobytes(),
    ]
    Path(path).write_bytes(b"".join(parts))


def read_stats_file(path) -> tuple[GaussianStats, FeatureKind]:
    data = Path(path).read_bytes()
    r = _Reader(data)
    magic = r.take(4, "magic")
    if magic != STATS_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {STATS_MAGIC!r}", offset=0)
    version = struct.unpack("<I", r.take(4, "version"))[0]
    if version != VERSION:
        raise FormatError(f"unsupported version {version}", offset=4)
    kind_raw = r.u64("kind")
    try:
        kind = FeatureKind(kind_raw)
    except ValueError:
        raise FormatError(f"unknown payload kind {kind_raw}", offset=8) from None
    count = r.u64("count")
    d = r.u64("d")
    mean = np.frombuffer(r.take(d * 8, "mean"), dtype="<f8").copy()
    cov = np.frombuffer(r.take(d * d * 8, "cov"), dtype="<f8").reshape(d, d).copy()
    if r.offset != len(data):
        raise FormatError(
            f"{len(data) - r.offset} trailing bytes", offset=r.offset
        )
    return GaussianStats(mean=mean, cov=cov, count=count), kind


def is_stats_file(path) -> bool:
    try:
        with open(path, "rb") as fh:
            return fh.read(4) == STATS_MAGIC
    except OSError:
        return False
