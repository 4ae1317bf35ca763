"""Linear softmax classifier over the pooled representation, with manual gradients."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, DimensionMismatch


@dataclass
class HeadParams:
    W: np.ndarray  # (n, D)
    b: np.ndarray  # (n,)
    dropout_rate: float = 0.0

    @property
    def n_classes(self) -> int:
        return self.W.shape[0]

    @property
    def in_features(self) -> int:
        return self.W.shape[1]


@dataclass
class Prediction:
    raw_scores: np.ndarray
    probabilities: np.ndarray


def init_head(n_classes: int, in_features: int, seed: int, dropout_rate: float = 0.0) -> HeadParams:
    """Uniform(-a, a) weights with a = sqrt(1/in_features), zero bias."""
    rng = np.random.default_rng(seed)
    a = np.sqrt(1.0 / in_features)
    W = rng.uniform(-a, a, size=(n_classes, in_features))
    return HeadParams(W, np.zeros(n_classes), dropout_rate)


def log_softmax(scores: np.ndarray) -> np.ndarray:
    shifted = scores - np.max(scores)
    return shifted - np.log(np.sum(np.exp(shifted)))


def softmax(scores: np.ndarray) -> np.ndarray:
    shifted = np.exp(scores - np.max(scores))
    return shifted / shifted.sum()


def _check_input(P: np.ndarray, params: HeadParams) -> np.ndarray:
    P = np.asarray(P, dtype=np.float64).reshape(-1)
    if P.shape[0] != params.in_features:
        raise DimensionMismatch(
            f"representation length {P.shape[0]} != head input width {params.in_features}"
        )
    return P


def raw_scores(P: np.ndarray, params: HeadParams) -> np.ndarray:
    return params.W @ _check_input(P, params) + params.b


def predict(P: np.ndarray, params: HeadParams) -> Prediction:
    scores = raw_scores(P, params)
    return Prediction(scores, softmax(scores))


def loss(pred: Prediction, label: int) -> float:
    """Cross-entropy from the raw scores via log-sum-exp."""
    n = pred.raw_scores.shape[0]
    if not 0 <= label < n:
        raise DataError(f"label {label} out of range for {n} classes")
    return float(-log_softmax(pred.raw_scores)[label])


def head_backward(P: np.ndarray, params: HeadParams, label: int):
    """Gradients of the cross-entropy loss w.r.t. (W, b, P)."""
    P = _check_input(P, params)
    if not 0 <= label < params.n_classes:
        raise DataError(f"label {label} out of range for {params.n_classes} classes")
    e = softmax(params.W @ P + params.b)
    e[label] -= 1.0
    return np.outer(e, P), e, params.W.T @ e


def dropout_mask(length: int, rate: float, seed: int | np.random.Generator) -> np.ndarray:
    """Inverted dropout mask: 0 with probability ``rate``, else 1/(1-rate)."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must lie in [0, 1), got {rate}")
    if rate == 0.0:
        return np.ones(length)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    keep = rng.random(length) >= rate
    return keep / (1.0 - rate)


def frame_average_predict(frames: np.ndarray, params: HeadParams) -> Prediction:
    """Score every frame with a (n, d) head and average the raw scores.

    Softmax is applied after the average.  Because the head is linear this
    equals scoring the mean frame, which is also how the gradient is taken.
    """
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 2 or frames.shape[1] != params.in_features:
        raise DimensionMismatch(
            f"frames of shape {frames.shape} do not fit head input width {params.in_features}"
        )
    scores = (frames @ params.W.T + params.b).mean(axis=0)
    return Prediction(scores, softmax(scores))
