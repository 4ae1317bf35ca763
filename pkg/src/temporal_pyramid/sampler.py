"""Sparse segment sampling: one frame from each of T equal-duration segments."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MODES = ("random", "center")


@dataclass(frozen=True)
class SamplePlan:
    t: int
    T: int
    mode: str = "center"
    seed: int = 0

    def __post_init__(self):
        if self.t < 1 or self.T < 1:
            raise ValueError(f"frame and segment counts must be positive (t={self.t}, T={self.T})")
        if self.mode not in MODES:
            raise ValueError(f"unknown sampling mode {self.mode!r}")


def segment_bounds(t: int, T: int) -> list[tuple[int, int]]:
    """Inclusive 1-based (start, end) of each segment, valid when t >= T."""
    return [((k - 1) * t // T + 1, k * t // T) for k in range(1, T + 1)]


def segment_indices(plan: SamplePlan, rng: np.random.Generator | None = None) -> list[int]:
    """Pick one 1-based frame index per segment, in temporal order.

    Videos shorter than T frames repeat frames: segment k maps to
    ``min(t, floor((k-1)*t/T) + 1)``, in either mode.  In random mode an
    explicit ``rng`` takes precedence over ``plan.seed``.
    """
    t, T = plan.t, plan.T
    if t < T:
        return [min(t, (k - 1) * t // T + 1) for k in range(1, T + 1)]
    bounds = segment_bounds(t, T)
    if plan.mode == "center":
        return [(start + end) // 2 for start, end in bounds]
    if rng is None:
        rng = np.random.default_rng(plan.seed)
    starts = np.array([b[0] for b in bounds])
    ends = np.array([b[1] for b in bounds])
    return [int(i) for i in rng.integers(starts, ends + 1)]
