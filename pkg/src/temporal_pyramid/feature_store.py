"""On-disk formats: binary feature files, JSON-lines manifests and checkpoints.

Feature file layout (all little-endian)::

    b"DTPF" | u16 version | u32 d | u32 t | u16 v | f32[t][v][d]

Checkpoint layout::

    b"DTPC" | u16 version | u32 header_len | header (UTF-8 JSON) | f64 payload

The checkpoint header names every array in the payload with its shape, in
payload order, so the file can be read without knowing the model.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, DimensionMismatch
from .tpp import PyramidConfig

FEATURE_MAGIC = b"DTPF"
FEATURE_VERSION = 1
CHECKPOINT_MAGIC = b"DTPC"
CHECKPOINT_VERSION = 1

_FEATURE_HEADER = struct.Struct("<4sHIIH")
_CKPT_PREFIX = struct.Struct("<4sHI")
_U32_MAX = 2 ** 32 - 1
_U16_MAX = 2 ** 16 - 1

STREAMS = ("spatial", "temporal")
SPLITS = ("train", "validation", "test")
AGGREGATIONS = ("tpp", "frame-average")


class FeatureFormatError(DataError):
    pass


def write_features(seq: np.ndarray, path: str | Path, variants: int | None = None) -> None:
    """Write a (t, v, d) array, or a (t, d) array as a single variant.

    ``variants`` is optional and only checked against the array shape.
    """
    arr = np.asarray(seq)
    if arr.ndim == 2:
        arr = arr[:, None, :]
    if arr.ndim != 3:
        raise FeatureFormatError(f"expected (t, v, d) or (t, d) array, got shape {arr.shape}")
    t, v, d = arr.shape
    if variants is not None and variants != v:
        raise DimensionMismatch(f"variant count {variants} does not match array ({v})")
    if min(t, v, d) < 1:
        raise FeatureFormatError(f"invalid dimension: t={t}, v={v}, d={d}")
    if t > _U32_MAX or d > _U32_MAX or v > _U16_MAX:
        raise FeatureFormatError(f"dimension overflow: t={t}, v={v}, d={d}")
    header = _FEATURE_HEADER.pack(FEATURE_MAGIC, FEATURE_VERSION, d, t, v)
    payload = np.ascontiguousarray(arr, dtype="<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload)


def read_header(path: str | Path) -> tuple[int, int, int]:
    """Return (t, v, d) from a feature file header without reading the payload."""
    with open(path, "rb") as fh:
        raw = fh.read(_FEATURE_HEADER.size)
    return _parse_header(raw, path)


def _parse_header(raw: bytes, path) -> tuple[int, int, int]:
    if len(raw) < _FEATURE_HEADER.size:
        raise FeatureFormatError(f"{path}: truncated header")
    magic, version, d, t, v = _FEATURE_HEADER.unpack(raw[:_FEATURE_HEADER.size])
    if magic != FEATURE_MAGIC:
        raise FeatureFormatError(f"{path}: bad magic {magic!r}")
    if version != FEATURE_VERSION:
        raise FeatureFormatError(f"{path}: version mismatch (file {version}, reader {FEATURE_VERSION})")
    if min(t, v, d) < 1:
        raise FeatureFormatError(f"{path}: invalid dimension t={t}, v={v}, d={d}")
    return t, v, d


def read_features(path: str | Path) -> np.ndarray:
    """Load a feature file as a float64 array of shape (t, v, d)."""
    raw = Path(path).read_bytes()
    t, v, d = _parse_header(raw, path)
    expected = t * v * d * 4
    payload = raw[_FEATURE_HEADER.size:]
    if len(payload) < expected:
        raise FeatureFormatError(f"{path}: truncated payload ({len(payload)} of {expected} bytes)")
    if len(payload) > expected:
        raise FeatureFormatError(f"{path}: {len(payload) - expected} trailing bytes after payload")
    return np.frombuffer(payload, dtype="<f4").astype(np.float64).reshape(t, v, d)


@dataclass(frozen=True)
class VideoRecord:
    video_id: str
    label: int
    stream: str
    path: Path
    frames: int


@dataclass
class DatasetManifest:
    records: list[VideoRecord]
    n_classes: int
    split: str = "train"

    def for_stream(self, stream: str) -> "DatasetManifest":
        return DatasetManifest([r for r in self.records if r.stream == stream], self.n_classes, self.split)

    @property
    def streams(self) -> list[str]:
        return [s for s in STREAMS if any(r.stream == s for r in self.records)]


def load_manifest(path: str | Path, n_classes: int | None = None, check_files: bool = True,
                  base_dir: str | Path | None = None) -> DatasetManifest:
    """Parse and validate a JSON-lines manifest.

    A line without ``video_id`` is a header and may set ``n_classes`` and
    ``split``.  Relative record paths resolve against ``base_dir``, or the
    manifest's own directory when not given.  Unknown fields are ignored.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"manifest not found: {path}")
    base = Path(base_dir) if base_dir is not None else path.parent
    header: dict = {}
    records: list[VideoRecord] = []
    seen: set[tuple[str, str]] = set()
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from None
        if "video_id" not in obj:
            header.update(obj)
            continue
        try:
            rec = VideoRecord(
                video_id=str(obj["video_id"]),
                label=int(obj["label"]),
                stream=str(obj["stream"]),
                path=base / obj["path"],
                frames=int(obj["frames"]),
            )
        except KeyError as exc:
            raise DataError(f"{path}:{lineno}: missing field {exc.args[0]!r}") from None
        if rec.stream not in STREAMS:
            raise DataError(f"{path}:{lineno}: unknown stream {rec.stream!r}")
        key = (rec.video_id, rec.stream)
        if key in seen:
            raise DataError(f"{path}:{lineno}: duplicate video {rec.video_id!r} in stream {rec.stream}")
        seen.add(key)
        records.append(rec)

    n = n_classes if n_classes is not None else header.get("n_classes")
    if n is None:
        n = max((r.label for r in records), default=-1) + 1
    split = header.get("split", "train")
    if split not in SPLITS:
        raise DataError(f"{path}: unknown split {split!r}")
    for rec in records:
        if not 0 <= rec.label < n:
            raise DataError(f"{path}: label out of range: {rec.video_id} has label {rec.label}, n_classes={n}")
        if check_files:
            if not rec.path.exists():
                raise FileNotFoundError(f"feature file missing for {rec.video_id}: {rec.path}")
            t, _, _ = read_header(rec.path)
            if t != rec.frames:
                raise DataError(f"{rec.path}: frame-count mismatch (manifest {rec.frames}, file {t})")
    return DatasetManifest(records, int(n), split)


def save_manifest(manifest: DatasetManifest, path: str | Path) -> None:
    path = Path(path)
    lines = [json.dumps({"n_classes": manifest.n_classes, "split": manifest.split})]
    for rec in manifest.records:
        try:
            rel = rec.path.relative_to(path.parent)
        except ValueError:
            rel = rec.path
        lines.append(json.dumps({
            "video_id": rec.video_id,
            "label": rec.label,
            "stream": rec.stream,
            "path": rel.as_posix(),
            "frames": rec.frames,
        }))
    path.write_text("\n".join(lines) + "\n")


@dataclass
class Checkpoint:
    """Trained head plus optimizer state.

    For ``aggregation == "tpp"`` the head is (n, M*d); for the frame-average
    baseline it is (n, d) and ``pyramid`` is kept only for bookkeeping.
    """

    pyramid: PyramidConfig
    d: int
    n_classes: int
    W: np.ndarray
    b: np.ndarray
    velocity_W: np.ndarray
    velocity_b: np.ndarray
    lr: float
    iteration: int = 0
    aggregation: str = "tpp"
    segments: int = 25
    dropout_rate: float = 0.0
    best_val_loss: float = math.inf
    evals_since_improvement: int = 0
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.aggregation not in AGGREGATIONS:
            raise DataError(f"unknown aggregation mode {self.aggregation!r}")
        width = self.pyramid.n_bins * self.d if self.aggregation == "tpp" else self.d
        if self.W.shape != (self.n_classes, width):
            raise DimensionMismatch(f"weight shape {self.W.shape} != ({self.n_classes}, {width})")
        if self.b.shape != (self.n_classes,):
            raise DimensionMismatch(f"bias shape {self.b.shape} != ({self.n_classes},)")


_CKPT_ARRAYS = ("W", "b", "velocity_W", "velocity_b")


def save_checkpoint(ckpt: Checkpoint, path: str | Path) -> None:
    header = {
        "pyramid": ckpt.pyramid.to_dict(),
        "d": ckpt.d,
        "n_classes": ckpt.n_classes,
        "aggregation": ckpt.aggregation,
        "segments": ckpt.segments,
        "dropout_rate": ckpt.dropout_rate,
        "lr": ckpt.lr,
        "iteration": ckpt.iteration,
        "best_val_loss": ckpt.best_val_loss,
        "evals_since_improvement": ckpt.evals_since_improvement,
        "extra": ckpt.extra,
        "arrays": [[name, list(getattr(ckpt, name).shape)] for name in _CKPT_ARRAYS],
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(_CKPT_PREFIX.pack(CHECKPOINT_MAGIC, CHECKPOINT_VERSION, len(blob)))
        fh.write(blob)
        for name in _CKPT_ARRAYS:
            fh.write(np.ascontiguousarray(getattr(ckpt, name), dtype="<f8").tobytes())


def load_checkpoint(path: str | Path) -> Checkpoint:
    raw = Path(path).read_bytes()
    if len(raw) < _CKPT_PREFIX.size:
        raise FeatureFormatError(f"{path}: truncated checkpoint")
    magic, version, hlen = _CKPT_PREFIX.unpack(raw[:_CKPT_PREFIX.size])
    if magic != CHECKPOINT_MAGIC:
        raise FeatureFormatError(f"{path}: bad magic {magic!r}")
    if version != CHECKPOINT_VERSION:
        raise FeatureFormatError(f"{path}: version mismatch (file {version}, reader {CHECKPOINT_VERSION})")
    offset = _CKPT_PREFIX.size + hlen
    header = json.loads(raw[_CKPT_PREFIX.size:offset])
    arrays = {}
    for name, shape in header["arrays"]:
        count = int(np.prod(shape))
        chunk = raw[offset:offset + 8 * count]
        if len(chunk) < 8 * count:
            raise FeatureFormatError(f"{path}: truncated payload in {name}")
        arrays[name] = np.frombuffer(chunk, dtype="<f8").astype(np.float64).reshape(shape)
        offset += 8 * count
    return Checkpoint(
        pyramid=PyramidConfig.from_dict(header["pyramid"]),
        d=header["d"],
        n_classes=header["n_classes"],
        lr=header["lr"],
        iteration=header["iteration"],
        aggregation=header["aggregation"],
        segments=header["segments"],
        dropout_rate=header["dropout_rate"],
        best_val_loss=header["best_val_loss"],
        evals_since_improvement=header["evals_since_improvement"],
        extra=header.get("extra", {}),
        **arrays,
    )
