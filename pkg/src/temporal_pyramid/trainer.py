"""Mini-batch training of the classifier head on pooled video representations.

Each update samples T frames per video, pools them, applies dropout, scores
the result and backpropagates the mean cross-entropy through the head and
the pooling layer.  The optimizer is momentum SGD with global L2 gradient
clipping and a plateau rule that divides the learning rate by 10.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .errors import DataError, DimensionMismatch, NumericError
from .feature_store import Checkpoint, DatasetManifest, read_features
from .head import HeadParams, dropout_mask, head_backward, init_head, log_softmax
from .inference import predict_video
from .sampler import SamplePlan, segment_indices
from .tpp import PyramidConfig, encode, encode_backward

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    segments: int = 25
    pyramid: PyramidConfig = field(default_factory=PyramidConfig)
    batch_size: int = 128
    accumulation: int = 1  # micro-batches per update; batch_size must divide evenly
    lr: float = 0.01
    final_lr: float = 1e-5
    momentum: float = 0.9
    clip_norm: float = 40.0
    dropout_rate: float = 0.8
    max_iterations: int = 1000
    patience: int = 3
    min_delta: float = 1e-4
    eval_interval: int = 50
    seed: int = 0
    aggregation: str = "tpp"
    threads: int = 1

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.accumulation < 1 or self.batch_size % self.accumulation:
            raise ValueError(f"accumulation {self.accumulation} must divide batch_size {self.batch_size}")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")
        if self.clip_norm <= 0:
            raise ValueError("clip_norm must be positive")
        if self.aggregation not in ("tpp", "frame-average"):
            raise ValueError(f"unknown aggregation mode {self.aggregation!r}")
        if self.aggregation == "tpp" and self.segments < self.pyramid.min_frames:
            raise ValueError(
                f"{self.segments} segments cannot fill a pyramid level with {self.pyramid.min_frames} bins"
            )


@dataclass
class OptimizerState:
    velocity_W: np.ndarray
    velocity_b: np.ndarray
    lr: float
    iteration: int = 0
    best_val_loss: float = math.inf
    evals_since_improvement: int = 0
    stopped: bool = False

    @classmethod
    def fresh(cls, params: HeadParams, lr: float) -> "OptimizerState":
        return cls(np.zeros_like(params.W), np.zeros_like(params.b), lr)


def global_norm(grads) -> float:
    return math.sqrt(sum(float(np.sum(np.square(g))) for g in grads))


def clip_gradients(grads, clip_norm: float) -> list[np.ndarray]:
    """Rescale all tensors together so their joint L2 norm is at most ``clip_norm``."""
    norm = global_norm(grads)
    if norm > clip_norm:
        scale = clip_norm / norm
        return [g * scale for g in grads]
    return [np.array(g, copy=True) for g in grads]


def sgd_step(params: HeadParams, grads, state: OptimizerState, config: TrainConfig):
    """One clipped momentum update.  Returns new ``(params, state)``."""
    gW, gb = grads
    if gW.shape != params.W.shape or gb.shape != params.b.shape:
        raise DimensionMismatch("gradient shapes do not match parameters")
    if not (np.all(np.isfinite(gW)) and np.all(np.isfinite(gb))):
        raise NumericError(f"non-finite gradient at iteration {state.iteration}")
    gW, gb = clip_gradients([gW, gb], config.clip_norm)
    vW = config.momentum * state.velocity_W + gW
    vb = config.momentum * state.velocity_b + gb
    new_params = replace(params, W=params.W - state.lr * vW, b=params.b - state.lr * vb)
    return new_params, replace(state, velocity_W=vW, velocity_b=vb, iteration=state.iteration + 1)


def plateau_schedule(state: OptimizerState, val_loss: float, config: TrainConfig) -> OptimizerState:
    """Track validation loss; divide lr by 10 after ``patience`` stale evaluations."""
    if val_loss < state.best_val_loss - config.min_delta:
        return replace(state, best_val_loss=val_loss, evals_since_improvement=0)
    count = state.evals_since_improvement + 1
    if count < config.patience:
        return replace(state, evals_since_improvement=count)
    lr = state.lr / 10.0
    # Relative slack so 0.01 / 10 / 10 / 10 still counts as reaching 1e-5.
    stopped = lr < config.final_lr * (1.0 - 1e-9)
    return replace(state, lr=lr, evals_since_improvement=0, stopped=stopped)


def video_loss_and_grads(seq: np.ndarray, label: int, params: HeadParams, pyramid: PyramidConfig,
                         aggregation: str = "tpp", mask: np.ndarray | None = None,
                         frame_grad: bool = False):
    """Loss and gradients for one sampled (T, d) sequence.

    ``mask`` is a dropout mask over the head input: length M*d for the pyramid,
    shape (T, d) for frame averaging.  Returns ``(loss, gW, gb, gS)`` where
    ``gS`` is the gradient w.r.t. the frames, or None unless ``frame_grad``.
    """
    T = seq.shape[0]
    if aggregation == "frame-average":
        x_frames = seq if mask is None else seq * mask.reshape(seq.shape)
        x = x_frames.mean(axis=0)
    else:
        rep = encode(seq, pyramid)
        x = rep.flat() if mask is None else rep.flat() * mask
    scores = params.W @ x + params.b
    loss = float(-log_softmax(scores)[label])
    gW, gb, gx = head_backward(x, params, label)
    gS = None
    if frame_grad:
        if aggregation == "frame-average":
            gS = np.broadcast_to(gx / T, seq.shape)
            if mask is not None:
                gS = gS * mask.reshape(seq.shape)
            gS = np.array(gS)
        else:
            gP = gx if mask is None else gx * mask
            gS = encode_backward(gP, rep, pyramid)
    return loss, gW, gb, gS


@dataclass
class _Draw:
    index: int
    variant: int
    frames: np.ndarray
    mask: np.ndarray | None


def _load_videos(manifest: DatasetManifest):
    feats, labels = [], []
    for rec in manifest.records:
        feats.append(read_features(rec.path))
        labels.append(rec.label)
    return feats, np.asarray(labels, dtype=np.int64)


def evaluate_loss(feats, labels, params: HeadParams, config: TrainConfig, d: int) -> tuple[float, float]:
    """Mean loss and accuracy with deterministic test-time scoring."""
    ckpt = _to_checkpoint(params, OptimizerState.fresh(params, config.lr), config, d)
    total, correct = 0.0, 0
    for x, y in zip(feats, labels):
        scores = predict_video(x, ckpt, config.segments)
        total += float(-log_softmax(scores)[y])
        correct += int(np.argmax(scores) == y)
    return total / len(labels), correct / len(labels)


def _to_checkpoint(params: HeadParams, state: OptimizerState, config: TrainConfig, d: int) -> Checkpoint:
    return Checkpoint(
        pyramid=config.pyramid,
        d=d,
        n_classes=params.n_classes,
        W=params.W,
        b=params.b,
        velocity_W=state.velocity_W,
        velocity_b=state.velocity_b,
        lr=state.lr,
        iteration=state.iteration,
        aggregation=config.aggregation,
        segments=config.segments,
        dropout_rate=config.dropout_rate,
        best_val_loss=state.best_val_loss,
        evals_since_improvement=state.evals_since_improvement,
    )


def train(manifest: DatasetManifest, config: TrainConfig,
          validation: DatasetManifest | None = None,
          on_log: Callable[[dict], None] | None = None) -> tuple[Checkpoint, list[dict]]:
    """Run the training loop and return the final checkpoint and its log.

    Stops after ``max_iterations`` updates or once the plateau rule pushes the
    learning rate below ``final_lr``.  Fully determined by ``config.seed``.
    """
    if not manifest.records:
        raise DataError("training manifest has no records")
    streams = manifest.streams
    if len(streams) != 1:
        raise DataError(f"training needs a single stream, manifest has {streams}")
    feats, labels = _load_videos(manifest)
    d = feats[0].shape[2]
    for rec, x in zip(manifest.records, feats):
        if x.shape[2] != d:
            raise DimensionMismatch(f"{rec.video_id}: feature dimension {x.shape[2]} != {d}")
    n = manifest.n_classes
    width = config.pyramid.n_bins * d if config.aggregation == "tpp" else d

    rng = np.random.default_rng(config.seed)
    init_seed = int(rng.integers(2 ** 63))
    params = init_head(n, width, init_seed, config.dropout_rate)
    state = OptimizerState.fresh(params, config.lr)

    val = None
    if validation is not None and validation.records:
        val = _load_videos(validation.for_stream(streams[0]))
        if not len(val[1]):
            val = None

    history: list[dict] = []

    def emit(rec):
        history.append(rec)
        if on_log is not None:
            on_log(rec)

    order = np.empty(0, dtype=np.int64)
    cursor = 0
    executor = ThreadPoolExecutor(config.threads) if config.threads > 1 else None
    try:
        while state.iteration < config.max_iterations and not state.stopped:
            # All randomness is drawn here, serially, so the thread count cannot change results.
            draws = []
            for _ in range(config.batch_size):
                if cursor >= len(order):
                    order = rng.permutation(len(feats))
                    cursor = 0
                i = int(order[cursor])
                cursor += 1
                x = feats[i]
                t, v, _ = x.shape
                variant = int(rng.integers(v))
                idx = np.array(segment_indices(SamplePlan(t, config.segments, "random"), rng)) - 1
                mask_len = width if config.aggregation == "tpp" else config.segments * d
                mask = dropout_mask(mask_len, config.dropout_rate, rng) if config.dropout_rate > 0 else None
                draws.append(_Draw(i, variant, x[idx, variant, :], mask))

            def work(draw: _Draw):
                return video_loss_and_grads(draw.frames, int(labels[draw.index]), params,
                                            config.pyramid, config.aggregation, draw.mask)

            results = list(executor.map(work, draws)) if executor else [work(dr) for dr in draws]
            gW = np.zeros_like(params.W)
            gb = np.zeros_like(params.b)
            batch_loss = 0.0
            for loss_i, gW_i, gb_i, _ in results:
                batch_loss += loss_i
                gW += gW_i
                gb += gb_i
            batch_loss /= config.batch_size
            if not math.isfinite(batch_loss):
                raise NumericError(f"non-finite training loss at iteration {state.iteration}")
            gW /= config.batch_size
            gb /= config.batch_size
            params, state = sgd_step(params, (gW, gb), state, config)
            emit({"iteration": state.iteration, "split": "train", "loss": batch_loss,
                  "accuracy": None, "lr": state.lr})

            if val is not None and state.iteration % config.eval_interval == 0:
                val_loss, val_acc = evaluate_loss(val[0], val[1], params, config, d)
                emit({"iteration": state.iteration, "split": "validation", "loss": val_loss,
                      "accuracy": val_acc, "lr": state.lr})
                state = plateau_schedule(state, val_loss, config)
                if state.stopped:
                    log.info("learning rate fell below %g at iteration %d, stopping",
                             config.final_lr, state.iteration)
    finally:
        if executor is not None:
            executor.shutdown()

    return _to_checkpoint(params, state, config, d), history
