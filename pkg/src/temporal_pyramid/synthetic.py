"""Small datasets with planted temporal structure.

``separable``
    each class has its own mean vector; every frame is mean + noise.
``order_pairs``
    classes 2k and 2k+1 are built from the same two prototypes A and B,
    A-then-B versus B-then-A, so only frame order tells them apart.
``confuser``
    the first part of every video is a shared look-alike segment, offset by
    a per-video nuisance vector; only the remainder carries the class.

Each stream gets its own prototypes, so a "temporal" copy behaves like an
independent second view of the same videos.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .feature_store import DatasetManifest, VideoRecord, save_manifest, write_features

STRUCTURES = ("separable", "order_pairs", "confuser")
_STREAM_IDS = {"spatial": 0, "temporal": 1}
_SPLIT_IDS = {"train": 0, "validation": 1, "test": 2}


@dataclass
class SyntheticSpec:
    n_classes: int = 4
    d: int = 16
    frames: int = 12
    videos_per_class: dict[str, int] = field(
        default_factory=lambda: {"train": 50, "validation": 10, "test": 20}
    )
    noise: float = 0.1
    structure: str = "order_pairs"
    seed: int = 0
    variants: int = 1
    streams: tuple[str, ...] = ("spatial", "temporal")
    shared_fraction: float = 0.75  # confuser only
    nuisance: float = 1.0  # confuser only: std of the per-video shared-segment offset

    def __post_init__(self):
        if self.structure not in STRUCTURES:
            raise ValueError(f"unknown structure {self.structure!r}")
        if self.n_classes < 1 or self.d < 1 or self.frames < 1 or self.variants < 1:
            raise ValueError("n_classes, d, frames and variants must be positive")
        if self.structure == "order_pairs" and self.n_classes % 2:
            raise ValueError("order_pairs needs an even number of classes")
        if self.noise < 0:
            raise ValueError("noise must be nonnegative")
        if not 0.0 <= self.shared_fraction < 1.0:
            raise ValueError("shared_fraction must lie in [0, 1)")
        unknown = set(self.videos_per_class) - set(_SPLIT_IDS)
        if unknown:
            raise ValueError(f"unknown splits {sorted(unknown)}")
        for s in self.streams:
            if s not in _STREAM_IDS:
                raise ValueError(f"unknown stream {s!r}")


def _prototypes(spec: SyntheticSpec, stream: str) -> dict[str, np.ndarray]:
    rng = np.random.default_rng([spec.seed, _STREAM_IDS[stream]])
    return {
        "class": rng.standard_normal((spec.n_classes, spec.d)),
        "pair": rng.standard_normal((max(spec.n_classes // 2, 1), 2, spec.d)),
        "shared": rng.standard_normal(spec.d),
    }


def class_template(spec: SyntheticSpec, protos: dict[str, np.ndarray], label: int) -> np.ndarray:
    """Noise-free (t, d) frame sequence for a class."""
    t = spec.frames
    if spec.structure == "separable":
        return np.tile(protos["class"][label], (t, 1))
    if spec.structure == "order_pairs":
        a, b = protos["pair"][label // 2]
        half = t // 2
        first, second = (a, b) if label % 2 == 0 else (b, a)
        if label % 2 == 0:
            return np.vstack([np.tile(first, (half, 1)), np.tile(second, (t - half, 1))])
        # Reversal of the even class: same multiset of frames, opposite order.
        return np.vstack([np.tile(first, (t - half, 1)), np.tile(second, (half, 1))])
    shared_len = int(round(spec.shared_fraction * t))
    return np.vstack([np.tile(protos["shared"], (shared_len, 1)),
                      np.tile(protos["class"][label], (t - shared_len, 1))])


def video_features(spec: SyntheticSpec, protos, stream: str, split: str, label: int, index: int) -> np.ndarray:
    """One video's (t, v, d) features, seeded from its identity alone."""
    rng = np.random.default_rng([spec.seed, _STREAM_IDS[stream], _SPLIT_IDS[split], label, index])
    base = class_template(spec, protos, label)
    if spec.structure == "confuser":
        shared_len = int(round(spec.shared_fraction * spec.frames))
        base = base.copy()
        base[:shared_len] += spec.nuisance * rng.standard_normal(spec.d)
    noise = rng.standard_normal((spec.frames, spec.variants, spec.d))
    return base[:, None, :] + spec.noise * noise


def generate_arrays(spec: SyntheticSpec) -> dict[str, list[tuple[str, int, str, np.ndarray]]]:
    """In-memory dataset: split -> [(video_id, label, stream, features)]."""
    out: dict[str, list] = {}
    for split, count in spec.videos_per_class.items():
        items = []
        for stream in spec.streams:
            protos = _prototypes(spec, stream)
            for label in range(spec.n_classes):
                for i in range(count):
                    vid = f"{split}_c{label:03d}_{i:04d}"
                    items.append((vid, label, stream, video_features(spec, protos, stream, split, label, i)))
        out[split] = items
    return out


def generate(spec: SyntheticSpec, outdir: str | Path) -> dict[str, DatasetManifest]:
    """Write feature files and one ``<split>.jsonl`` manifest per split."""
    outdir = Path(outdir)
    manifests = {}
    for split, items in generate_arrays(spec).items():
        records = []
        for vid, label, stream, feats in items:
            folder = outdir / "features" / stream / split
            folder.mkdir(parents=True, exist_ok=True)
            path = folder / f"{vid}.dtpf"
            write_features(feats, path)
            records.append(VideoRecord(vid, label, stream, path, spec.frames))
        manifest = DatasetManifest(records, spec.n_classes, split)
        save_manifest(manifest, outdir / f"{split}.jsonl")
        manifests[split] = manifest
    return manifests
