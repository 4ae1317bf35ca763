"""Temporal pyramid pooling of per-frame video features into fixed-size video representations."""

from .errors import DataError, DimensionMismatch, NumericError
from .feature_store import (
    Checkpoint,
    DatasetManifest,
    load_checkpoint,
    load_manifest,
    read_features,
    save_checkpoint,
    write_features,
)
from .inference import EvalReport, FusionWeights, evaluate, fuse_streams, predict_video
from .sampler import SamplePlan, segment_indices
from .tpp import PyramidConfig, bin_ranges, encode, encode_backward
from .trainer import TrainConfig, train

__version__ = "0.1.0"

__all__ = [
    "Checkpoint", "DataError", "DatasetManifest", "DimensionMismatch", "EvalReport",
    "FusionWeights", "NumericError", "PyramidConfig", "SamplePlan", "TrainConfig",
    "bin_ranges", "encode", "encode_backward", "evaluate", "fuse_streams", "load_checkpoint",
    "load_manifest", "predict_video", "read_features", "save_checkpoint", "segment_indices",
    "train", "write_features",
]
