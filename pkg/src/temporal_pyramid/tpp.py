"""Temporal pyramid pooling over a sequence of per-frame feature vectors.

A pyramid with levels ``1..K`` splits the T frames into ``2**(k-1)`` ordered
bins at level ``k``, pools every bin with the same kernel and stacks the
results coarse to fine.  The output has ``M = 2**K - 1`` rows regardless of
T, which is what lets a model trained on one frame count run on another.

Frame and bin indices in the public helpers are 1-based and inclusive, the
way the pooling ranges are usually written down; arrays are 0-based.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, DimensionMismatch

KERNELS = ("max", "average")


class PyramidError(DataError):
    """Sequence too short for the requested pyramid."""


@dataclass(frozen=True)
class PyramidConfig:
    """Pyramid shape and pooling kernel.

    ``bins`` defaults to ``(1, 2, 4, ..., 2**(levels-1))``.  Passing it
    explicitly allows non-dyadic layouts such as a single level with 3 bins.
    """

    levels: int = 3
    kernel: str = "max"
    bins: tuple[int, ...] = field(default=())

    def __post_init__(self):
        if self.kernel not in KERNELS:
            raise ValueError(f"unknown kernel {self.kernel!r}, expected one of {KERNELS}")
        if not self.bins:
            if self.levels < 1:
                raise ValueError("pyramid needs at least one level")
            object.__setattr__(self, "bins", tuple(2 ** i for i in range(self.levels)))
        else:
            bins = tuple(int(b) for b in self.bins)
            if any(b < 1 for b in bins):
                raise ValueError(f"bin counts must be positive, got {bins}")
            object.__setattr__(self, "bins", bins)
            object.__setattr__(self, "levels", len(bins))

    @property
    def n_bins(self) -> int:
        """Total bin count M."""
        return sum(self.bins)

    @property
    def min_frames(self) -> int:
        return max(self.bins)

    def output_length(self, d: int) -> int:
        return self.n_bins * d

    def label(self) -> str:
        text = ",".join(str(b) for b in self.bins)
        return text if self.kernel == "max" else f"{text}(Ave)"

    def to_dict(self) -> dict:
        return {"bins": list(self.bins), "kernel": self.kernel}

    @classmethod
    def from_dict(cls, data: dict) -> "PyramidConfig":
        return cls(kernel=data["kernel"], bins=tuple(data["bins"]))


def partition(T: int, n_bins: int) -> list[tuple[int, int]]:
    """Split frames 1..T into ``n_bins`` contiguous inclusive ranges.

    Bin b covers ``floor((b-1)*T/n) + 1 .. floor(b*T/n)``, so bin lengths
    differ by at most one and the ranges tile 1..T exactly.
    """
    if n_bins < 1:
        raise ValueError("n_bins must be positive")
    if T < n_bins:
        raise PyramidError(f"pyramid level too fine: {n_bins} bins > {T} frames")
    return [((b - 1) * T // n_bins + 1, b * T // n_bins) for b in range(1, n_bins + 1)]


def bin_ranges(T: int, level: int) -> list[tuple[int, int]]:
    """Inclusive 1-based frame ranges of the ``2**(level-1)`` bins at a dyadic level."""
    if level < 1:
        raise ValueError("levels are numbered from 1")
    return partition(T, 2 ** (level - 1))


def pool_bin(kernel: str, frames: np.ndarray) -> tuple[np.ndarray, np.ndarray | None]:
    """Pool a (length, d) block of frames into one d-vector.

    For the max kernel also returns, per dimension, the offset within the
    block of the first frame attaining the maximum; ``None`` for average.
    """
    frames = np.asarray(frames)
    if frames.ndim != 2 or frames.shape[0] == 0:
        raise PyramidError("empty range")
    if kernel == "average":
        # cumsum adds frames strictly in order; .mean() may use pairwise summation.
        return frames.cumsum(axis=0)[-1] / frames.shape[0], None
    if kernel == "max":
        # np.argmax returns the first occurrence, which is the tie-break we want.
        arg = np.argmax(frames, axis=0)
        return frames[arg, np.arange(frames.shape[1])], arg
    raise ValueError(f"unknown kernel {kernel!r}")


@dataclass
class VideoRepresentation:
    """Pooled (M, d) matrix plus what backward needs.

    ``argmax`` holds absolute 0-based frame indices per (bin, dim) for the
    max kernel.  ``ranges`` lists the inclusive 1-based span of every row.
    """

    values: np.ndarray
    ranges: list[tuple[int, int]]
    n_frames: int
    argmax: np.ndarray | None = None

    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)


def _all_ranges(T: int, cfg: PyramidConfig) -> list[tuple[int, int]]:
    if T < cfg.min_frames:
        raise PyramidError(
            f"sequence too short: {T} frames, pyramid needs at least {cfg.min_frames}"
        )
    ranges = []
    for n in cfg.bins:
        ranges.extend(partition(T, n))
    return ranges


def encode(seq: np.ndarray, cfg: PyramidConfig) -> VideoRepresentation:
    """Pool a (T, d) frame sequence into the (M, d) pyramid representation."""
    seq = np.asarray(seq)
    if seq.ndim != 2 or seq.shape[1] < 1:
        raise DimensionMismatch(f"expected a (T, d) sequence, got shape {seq.shape}")
    T, d = seq.shape
    ranges = _all_ranges(T, cfg)
    values = np.empty((len(ranges), d), dtype=seq.dtype)
    argmax = np.empty((len(ranges), d), dtype=np.int64) if cfg.kernel == "max" else None
    for row, (start, end) in enumerate(ranges):
        pooled, arg = pool_bin(cfg.kernel, seq[start - 1:end])
        values[row] = pooled
        if argmax is not None:
            argmax[row] = arg + (start - 1)
    return VideoRepresentation(values, ranges, T, argmax)


def encode_backward(grad: np.ndarray, rep: VideoRepresentation, cfg: PyramidConfig) -> np.ndarray:
    """Route dL/dP (M, d) back to dL/dS (T, d), summing over pyramid levels."""
    grad = np.asarray(grad, dtype=np.float64)
    M, d = rep.values.shape
    if grad.size != M * d:
        raise DimensionMismatch(f"gradient has {grad.size} entries, representation has {M * d}")
    grad = grad.reshape(M, d)
    if len(rep.ranges) != cfg.n_bins or (cfg.kernel == "max") != (rep.argmax is not None):
        raise DimensionMismatch("provenance does not match pyramid config")
    out = np.zeros((rep.n_frames, d))
    if cfg.kernel == "max":
        cols = np.arange(d)
        for row in range(M):
            np.add.at(out, (rep.argmax[row], cols), grad[row])
    else:
        for row, (start, end) in enumerate(rep.ranges):
            out[start - 1:end] += grad[row] / (end - start + 1)
    return out
