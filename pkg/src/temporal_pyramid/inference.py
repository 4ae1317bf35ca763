"""Test-time scoring, two-stream fusion and accuracy reports.

Everything here works on raw (pre-softmax) scores: variants are averaged
and streams are fused before any argmax, with no softmax in between.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError, DimensionMismatch
from .feature_store import Checkpoint, DatasetManifest, read_features
from .head import HeadParams
from .sampler import SamplePlan, segment_indices
from .tpp import encode


@dataclass(frozen=True)
class FusionWeights:
    spatial: float = 0.5
    temporal: float = 0.5

    def __post_init__(self):
        if self.spatial < 0 or self.temporal < 0:
            raise ValueError("fusion weights must be nonnegative")
        if self.spatial + self.temporal <= 0:
            raise ValueError("fusion weights must not both be zero")

    def of(self, stream: str) -> float:
        return {"spatial": self.spatial, "temporal": self.temporal}[stream]


def head_params(ckpt: Checkpoint) -> HeadParams:
    return HeadParams(ckpt.W, ckpt.b, 0.0)


def sequence_scores(seq: np.ndarray, ckpt: Checkpoint) -> np.ndarray:
    """Raw class scores for one already-sampled (T, d) sequence."""
    if seq.shape[1] != ckpt.d:
        raise DimensionMismatch(f"dimension mismatch: features have d={seq.shape[1]}, checkpoint expects d={ckpt.d}")
    if ckpt.aggregation == "frame-average":
        return (seq @ ckpt.W.T + ckpt.b).mean(axis=0)
    return ckpt.W @ encode(seq, ckpt.pyramid).flat() + ckpt.b


def predict_video(features: np.ndarray, ckpt: Checkpoint, T: int) -> np.ndarray:
    """Mean raw-score vector over the variants of a (t, v, d) feature array."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim == 2:
        features = features[:, None, :]
    t, v, d = features.shape
    if d != ckpt.d:
        raise DimensionMismatch(f"dimension mismatch: features have d={d}, checkpoint expects d={ckpt.d}")
    idx = np.array(segment_indices(SamplePlan(t, T, "center"))) - 1
    total = np.zeros(ckpt.n_classes)
    for j in range(v):
        total += sequence_scores(features[idx, j, :], ckpt)
    return total / v


def fuse_streams(score_s: np.ndarray, score_t: np.ndarray, weights: FusionWeights = FusionWeights()) -> np.ndarray:
    score_s = np.asarray(score_s, dtype=np.float64)
    score_t = np.asarray(score_t, dtype=np.float64)
    if score_s.shape != score_t.shape:
        raise DimensionMismatch(f"score length mismatch: {score_s.shape} vs {score_t.shape}")
    return weights.spatial * score_s + weights.temporal * score_t


@dataclass
class EvalReport:
    accuracy: float
    per_class_accuracy: np.ndarray  # NaN for classes absent from the split
    confusion: np.ndarray  # rows true label, columns prediction
    topk: dict[int, float]
    support: np.ndarray

    @property
    def n_classes(self) -> int:
        return self.confusion.shape[0]

    def to_text(self, class_names: list[str] | None = None) -> str:
        n = self.n_classes
        names = class_names or [str(c) for c in range(n)]
        lines = [f"overall accuracy: {self.accuracy:.6f}"]
        for k, rate in sorted(self.topk.items()):
            lines.append(f"top-{k} accuracy: {rate:.6f}")
        lines += ["", "per-class accuracy:", f"{'class':>12} {'support':>8} {'accuracy':>9}"]
        for c in range(n):
            acc = self.per_class_accuracy[c]
            acc_text = "n/a" if np.isnan(acc) else f"{acc:.4f}"
            lines.append(f"{names[c]:>12} {int(self.support[c]):>8} {acc_text:>9}")
        lines += ["", "confusion matrix (rows true, columns predicted):"]
        lines += [" ".join(f"{int(x):5d}" for x in row) for row in self.confusion]
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "per_class_accuracy": [None if np.isnan(a) else float(a) for a in self.per_class_accuracy],
            "support": self.support.astype(int).tolist(),
            "confusion": self.confusion.astype(int).tolist(),
            "topk": {str(k): v for k, v in self.topk.items()},
        }


def _rank_of(scores: np.ndarray, label: int) -> int:
    """Position of ``label`` when classes are sorted by score, ties to lower index."""
    s = scores[label]
    return int(np.sum(scores > s) + np.sum(scores[:label] == s))


def report_from_scores(scores: dict[str, np.ndarray], labels: dict[str, int], n_classes: int,
                       topk: tuple[int, ...] = (1, 5)) -> EvalReport:
    missing = [vid for vid in labels if vid not in scores]
    if missing:
        raise DataError(f"missing scores for {len(missing)} videos, e.g. {missing[0]!r}")
    confusion = np.zeros((n_classes, n_classes), dtype=np.int64)
    hits = {k: 0 for k in topk if k <= n_classes}
    for vid in sorted(labels):
        label, s = labels[vid], scores[vid]
        confusion[label, int(np.argmax(s))] += 1
        rank = _rank_of(s, label)
        for k in hits:
            hits[k] += rank < k
    support = confusion.sum(axis=1)
    total = int(support.sum())
    with np.errstate(invalid="ignore", divide="ignore"):
        per_class = np.where(support > 0, np.diag(confusion) / support, np.nan)
    accuracy = float(np.trace(confusion) / total) if total else float("nan")
    return EvalReport(
        accuracy=accuracy,
        per_class_accuracy=per_class,
        confusion=confusion,
        topk={k: (h / total if total else float("nan")) for k, h in hits.items()},
        support=support,
    )


def score_manifest(manifest: DatasetManifest, ckpt: Checkpoint, T: int, stream: str,
                   threads: int = 1) -> dict[str, np.ndarray]:
    """Raw scores for every video of one stream."""
    records = [r for r in manifest.records if r.stream == stream]
    if manifest.n_classes != ckpt.n_classes:
        raise DimensionMismatch(
            f"class count mismatch: manifest has {manifest.n_classes}, checkpoint {ckpt.n_classes}"
        )

    def one(rec):
        return predict_video(read_features(rec.path), ckpt, T)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            out = list(pool.map(one, records))
    else:
        out = [one(r) for r in records]
    return {r.video_id: s for r, s in zip(records, out)}


def fuse_tables(tables: dict[str, dict[str, np.ndarray]], weights: FusionWeights) -> dict[str, np.ndarray]:
    """Fuse per-stream score tables; a single table is passed through unchanged."""
    if len(tables) == 1:
        return dict(next(iter(tables.values())))
    spatial, temporal = tables["spatial"], tables["temporal"]
    missing = set(spatial) ^ set(temporal)
    if missing:
        raise DataError(f"missing stream scores for video {sorted(missing)[0]!r}")
    return {vid: fuse_streams(spatial[vid], temporal[vid], weights) for vid in spatial}


def evaluate(manifest: DatasetManifest, checkpoints: dict[str, Checkpoint],
             weights: FusionWeights = FusionWeights(), T: int = 25,
             topk: tuple[int, ...] = (1, 5), threads: int = 1):
    """Score, fuse and report.  Returns ``(report, fused_scores, labels)``."""
    if not checkpoints:
        raise ValueError("need at least one checkpoint")
    tables = {s: score_manifest(manifest, ck, T, s, threads) for s, ck in checkpoints.items()}
    fused = fuse_tables(tables, weights)
    labels = {}
    for rec in manifest.records:
        if rec.stream in checkpoints:
            labels[rec.video_id] = rec.label
    report = report_from_scores(fused, labels, manifest.n_classes, topk)
    return report, fused, labels


def write_scores(scores: dict[str, np.ndarray], labels: dict[str, int], path: str | Path) -> None:
    with open(path, "w") as fh:
        for vid in sorted(scores):
            fh.write(json.dumps({"video_id": vid, "label": labels.get(vid), "scores": scores[vid].tolist()}) + "\n")


def read_scores(path: str | Path) -> tuple[dict[str, np.ndarray], dict[str, int]]:
    scores, labels = {}, {}
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        obj = json.loads(line)
        scores[obj["video_id"]] = np.asarray(obj["scores"], dtype=np.float64)
        if obj.get("label") is not None:
            labels[obj["video_id"]] = int(obj["label"])
    return scores, labels
