"""Reference implementations used to check the fast paths.

Nothing in here shares code with ``tpp`` or ``head`` beyond the config
dataclass, so agreement between the two is meaningful.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import NumericError
from .head import HeadParams
from .tpp import PyramidConfig, PyramidError


def finite_diff(f: Callable[[np.ndarray], float], x, eps: float = 1e-3) -> np.ndarray:
    """Central-difference gradient of scalar ``f`` at ``x`` (any shape)."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    g = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = f(x)
        flat[i] = orig - eps
        fm = f(x)
        flat[i] = orig
        if not (math.isfinite(fp) and math.isfinite(fm)):
            raise NumericError(f"f is not finite around coordinate {i}")
        g[i] = (fp - fm) / (2 * eps)
    return grad


def brute_force_tpp(seq, cfg: PyramidConfig) -> np.ndarray:
    """Pyramid pooling with plain loops; returns the (M, d) matrix."""
    rows = [list(map(float, frame)) for frame in seq]
    T = len(rows)
    d = len(rows[0])
    out = []
    for n_bins in cfg.bins:
        if T < n_bins:
            raise PyramidError(f"pyramid level too fine: {n_bins} bins > {T} frames")
        for b in range(n_bins):
            lo = (b * T) // n_bins
            hi = ((b + 1) * T) // n_bins
            pooled = []
            for j in range(d):
                if cfg.kernel == "max":
                    best = rows[lo][j]
                    for i in range(lo + 1, hi):
                        if rows[i][j] > best:
                            best = rows[i][j]
                    pooled.append(best)
                else:
                    s = 0.0
                    for i in range(lo, hi):
                        s += rows[i][j]
                    pooled.append(s / (hi - lo))
            out.append(pooled)
    return np.array(out)


def reference_loss(frames: np.ndarray, W: np.ndarray, b: np.ndarray, cfg: PyramidConfig, label: int) -> float:
    """Full pipeline loss (pool, linear, softmax cross-entropy) from the loop oracle."""
    P = brute_force_tpp(frames, cfg).reshape(-1)
    z = W @ P + b
    m = max(z)
    return float(m + math.log(sum(math.exp(v - m) for v in z)) - z[label])


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """||a - n|| / max(||a||, ||n||), 0 when both vanish."""
    denom = max(np.linalg.norm(analytic), np.linalg.norm(numeric))
    if denom == 0.0:
        return 0.0
    return float(np.linalg.norm(analytic - numeric) / denom)


def tie_free_frames(rng: np.random.Generator, T: int, d: int, gap: float = 0.05) -> np.ndarray:
    """Random frames whose values in every dimension are at least ``gap`` apart.

    Keeps finite-difference probes from crossing an argmax switch.
    """
    out = np.empty((T, d))
    for j in range(d):
        out[:, j] = rng.permutation(T) * gap * 2 + rng.uniform(0.0, gap, size=T) - T * gap
    return out


@dataclass
class GradcheckReport:
    instances: int
    worst: dict[str, float] = field(default_factory=dict)
    tolerance: float = 1e-6

    @property
    def passed(self) -> bool:
        return all(v < self.tolerance for v in self.worst.values())

    def to_text(self) -> str:
        lines = [f"gradcheck over {self.instances} instances, tolerance {self.tolerance:g}"]
        for name, err in self.worst.items():
            status = "PASS" if err < self.tolerance else "FAIL"
            lines.append(f"{status} {name}: worst relative error {err:.3e}")
        lines.append("PASS" if self.passed else "FAIL")
        return "\n".join(lines) + "\n"


def gradcheck(instances: int = 100, seed: int = 0, eps: float = 1e-3, tolerance: float = 1e-6,
              max_d: int = 16, max_T: int = 16, max_levels: int = 3) -> GradcheckReport:
    """Compare analytic pipeline gradients to finite differences of the loop oracle."""
    from .trainer import video_loss_and_grads

    rng = np.random.default_rng(seed)
    worst = {"frames": 0.0, "W": 0.0, "b": 0.0}
    for k in range(instances):
        kernel = ("max", "average")[k % 2]
        levels = int(rng.integers(1, max_levels + 1))
        cfg = PyramidConfig(levels, kernel)
        T = int(rng.integers(cfg.min_frames, max_T + 1))
        d = int(rng.integers(1, max_d + 1))
        n = int(rng.integers(2, 6))
        frames = tie_free_frames(rng, T, d)
        W = rng.standard_normal((n, cfg.n_bins * d)) * 0.5
        b = rng.standard_normal(n) * 0.5
        label = int(rng.integers(n))
        params = HeadParams(W, b)
        _, gW, gb, gS = video_loss_and_grads(frames, label, params, cfg, frame_grad=True)
        nS = finite_diff(lambda x: reference_loss(x, W, b, cfg, label), frames, eps)
        nW = finite_diff(lambda w: reference_loss(frames, w, b, cfg, label), W, eps)
        nb = finite_diff(lambda v: reference_loss(frames, W, v, cfg, label), b, eps)
        worst["frames"] = max(worst["frames"], relative_error(gS, nS))
        worst["W"] = max(worst["W"], relative_error(gW, nW))
        worst["b"] = max(worst["b"], relative_error(gb, nb))
    return GradcheckReport(instances, worst, tolerance)
