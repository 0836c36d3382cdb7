"""Training losses, composed from tensor ops so they are differentiable.

* :func:`l1_loss` -- mean absolute error.
* :func:`ssim_global` -- single-window structural similarity per frame:
  means/variances/covariance are taken over the whole frame (per channel,
  then averaged), the cheap variant used as a training signal rather than
  the sliding-window metric in :mod:`wavehdr.metrics`.
* :func:`total_loss` -- L1 + weight * (1 - mean SSIM), the fine-tuning
  objective.

Inputs are clip tensors shaped [T, 3, H, W] (Tensor or ndarray).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from wavehdr import tensor as T
from wavehdr.errors import ConfigError, DimensionError

# SSIM stabilizers for unit dynamic range: (0.01)^2 and (0.03)^2.
SSIM_C1 = 1e-4
SSIM_C2 = 9e-4


@dataclass(frozen=True)
class LossConfig:
    ssim_weight: float = 1.0
    c1: float = SSIM_C1
    c2: float = SSIM_C2

    def __post_init__(self):
        if self.ssim_weight < 0:
            raise ConfigError(f"ssim_weight must be >= 0, got {self.ssim_weight}")
        if self.c1 <= 0 or self.c2 <= 0:
            raise ConfigError("SSIM stabilizers must be positive")


def _pair(pred, target) -> tuple[T.Tensor, T.Tensor]:
    p = pred if isinstance(pred, T.Tensor) else T.Tensor(pred)
    t = target if isinstance(target, T.Tensor) else T.Tensor(target)
    if p.shape != t.shape:
        raise DimensionError(f"loss shapes differ: {p.shape} vs {t.shape}")
    return p, t


def l1_loss(pred, target) -> T.Tensor:
    """Mean absolute error over every element."""
    p, t = _pair(pred, target)
    return T.reduce_mean(T.absolute(p - t))


def _ssim_channel(a: T.Tensor, b: T.Tensor, cfg: LossConfig) -> T.Tensor:
    """Global-statistics SSIM of two [H, W] tensors."""
    mu_a = T.reduce_mean(a)
    mu_b = T.reduce_mean(b)
    # biased (population) second moments
    var_a = T.reduce_mean(a * a) - mu_a * mu_a
    var_b = T.reduce_mean(b * b) - mu_b * mu_b
    cov = T.reduce_mean(a * b) - mu_a * mu_b
    num = (2.0 * mu_a * mu_b + cfg.c1) * (2.0 * cov + cfg.c2)
    den = (mu_a * mu_a + mu_b * mu_b + cfg.c1) * (var_a + var_b + cfg.c2)
    return num / den


def ssim_global(pred, target, cfg: LossConfig = LossConfig()) -> T.Tensor:
    """Frame SSIM: per-channel global statistics, averaged over channels.

    Accepts [3, H, W] (one frame) or [T, 3, H, W] (average over frames).
    """
    p, t = _pair(pred, target)
    if p.ndim == 3:
        p = T.reshape(p, (1,) + p.shape)
        t = T.reshape(t, (1,) + t.shape)
    if p.ndim != 4:
        raise DimensionError(f"expected [3,H,W] or [T,3,H,W], got {pred.shape}")
    nt, nc = p.shape[0], p.shape[1]
    acc = None
    for f in range(nt):
        for c in range(nc):
            s = _ssim_channel(p[f, c], t[f, c], cfg)
            acc = s if acc is None else acc + s
    return acc * (1.0 / (nt * nc))


def ssim_loss(pred, target, cfg: LossConfig = LossConfig()) -> T.Tensor:
    """1 - mean SSIM; zero iff the frames agree exactly."""
    return 1.0 - ssim_global(pred, target, cfg)


def total_loss(pred, target, cfg: LossConfig = LossConfig()) -> T.Tensor:
    """L1 plus weighted SSIM penalty: the fine-tuning objective."""
    return l1_loss(pred, target) + cfg.ssim_weight * ssim_loss(pred, target, cfg)
