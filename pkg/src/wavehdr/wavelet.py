"""Orthonormal 2-D wavelet transforms and dual-domain masking.

The transforms use separable analysis with periodized (circular) boundary
handling, so every level is an exact orthonormal change of basis: perfect
reconstruction and energy preservation hold to machine precision, which the
masking analysis relies on.

Masking ("dual-domain") works on a multi-level decomposition of a frame:

* every high-frequency subband (LH/HL/HH at all levels) is zeroed, and
* a Bernoulli cell mask zeroes a fraction of the deepest low-pass band,
  shared across colour channels.

The masked frame is the inverse transform of what survives.  A curriculum
helper ramps the low-pass masking ratio linearly over training.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from wavehdr.errors import ConfigError, DimensionError

# Scaling (low-pass) filters of the supported orthonormal banks.  db2 is the
# exact closed form [1+sqrt3, 3+sqrt3, 3-sqrt3, 1-sqrt3] / (4 sqrt2); the
# sym4 coefficients are the standard least-asymmetric ones refined to
# machine-precision orthonormality (all filter-bank identities hold to
# ~1e-16, checked in tests).
_SQRT2 = np.sqrt(2.0)
_SQRT3 = np.sqrt(3.0)
_LOWPASS: dict[str, list[float]] = {
    "haar": [1.0 / _SQRT2, 1.0 / _SQRT2],
    "db2": [(1.0 + _SQRT3) / (4.0 * _SQRT2), (3.0 + _SQRT3) / (4.0 * _SQRT2),
            (3.0 - _SQRT3) / (4.0 * _SQRT2), (1.0 - _SQRT3) / (4.0 * _SQRT2)],
    "sym4": [0.03222310060380873, -0.012603967262033482,
             -0.09921954357700231, 0.2978577956055424,
             0.8037387518054163, 0.49761866763221424,
             -0.02963552764598282, -0.07576571478886805],
}

WAVELET_NAMES = tuple(sorted(_LOWPASS))


def _qmf_highpass(alpha: np.ndarray) -> np.ndarray:
    """Quadrature-mirror high-pass: beta[k] = (-1)^(k+1) alpha[L-1-k].

    For haar this gives beta = [-1, 1] / sqrt(2).
    """
    length = alpha.shape[0]
    k = np.arange(length)
    return ((-1.0) ** (k + 1)) * alpha[length - 1 - k]


@dataclass(frozen=True)
class FilterBank:
    """An orthonormal analysis pair (low-pass ``alpha``, high-pass ``beta``)."""

    name: str
    alpha: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        a = self.alpha
        if a.ndim != 1 or a.shape[0] % 2 != 0:
            raise ConfigError(f"filter length must be even, got {a.shape}")
        # Orthonormality of the bank: unit energy and even-shift orthogonality.
        checks = [abs(float(a @ a) - 1.0)]
        for m in range(1, a.shape[0] // 2):
            checks.append(abs(float(a[2 * m:] @ a[:-2 * m])))
        if max(checks) > 1e-12:
            raise ConfigError(
                f"filter bank {self.name!r} not orthonormal (residual {max(checks):.3e})")

    @property
    def length(self) -> int:
        return int(self.alpha.shape[0])


def filter_bank(name: str) -> FilterBank:
    """Look up a supported filter bank by name."""
    key = name.strip().lower()
    if key not in _LOWPASS:
        raise ConfigError(f"unknown wavelet {name!r}; choose from {WAVELET_NAMES}")
    alpha = np.asarray(_LOWPASS[key], dtype=np.float64)
    return FilterBank(key, alpha, _qmf_highpass(alpha))


class Subbands(NamedTuple):
    """One decomposition level: approximation + three detail orientations."""

    ll: np.ndarray
    lh: np.ndarray  # low-pass rows, high-pass columns (horizontal detail)
    hl: np.ndarray  # high-pass rows, low-pass columns (vertical detail)
    hh: np.ndarray


@dataclass
class WaveletPyramid:
    """Multi-level decomposition; ``levels[k]`` is level k+1 (coarser as k grows).

    Only the deepest level's ``ll`` is part of the representation; shallower
    ``ll`` bands are implied and omitted to keep the pyramid non-redundant,
    matching the usual DWT layout.
    """

    levels: list[Subbands] = field(default_factory=list)

    @property
    def depth(self) -> int:
        return len(self.levels)

    def energy(self) -> float:
        """Total squared-coefficient energy (deepest ll + all details)."""
        total = float(np.sum(self.levels[-1].ll.astype(np.float64) ** 2))
        for lev in self.levels:
            for band in (lev.lh, lev.hl, lev.hh):
                total += float(np.sum(band.astype(np.float64) ** 2))
        return total


def _analyze_axis(x: np.ndarray, filt: np.ndarray, axis: int) -> np.ndarray:
    """Periodized filtering y[i] = sum_k f[k] x[(2i+k) mod n] along ``axis``."""
    acc = np.zeros_like(x, dtype=np.result_type(x.dtype, np.float64))
    for k, fk in enumerate(filt):
        acc += fk * np.roll(x, -k, axis=axis)
    sl = [slice(None)] * x.ndim
    sl[axis] = slice(0, None, 2)
    return acc[tuple(sl)]


def _synthesize_axis(c: np.ndarray, filt: np.ndarray, axis: int) -> np.ndarray:
    """Adjoint of :func:`_analyze_axis`: upsample by 2 then correlate."""
    shape = list(c.shape)
    shape[axis] *= 2
    up = np.zeros(shape, dtype=np.result_type(c.dtype, np.float64))
    sl = [slice(None)] * c.ndim
    sl[axis] = slice(0, None, 2)
    up[tuple(sl)] = c
    acc = np.zeros_like(up)
    for k, fk in enumerate(filt):
        acc += fk * np.roll(up, k, axis=axis)
    return acc


def dwt2d_level(x: np.ndarray, fb: FilterBank) -> Subbands:
    """One analysis level of a [H, W, ...] array (extra axes ride along)."""
    x = np.asarray(x)
    if x.ndim < 2:
        raise DimensionError(f"dwt2d_level needs at least 2 dims, got {x.shape}")
    h, w = x.shape[0], x.shape[1]
    if h % 2 or w % 2:
        raise DimensionError(f"spatial dims must be even, got {(h, w)}")
    lo = _analyze_axis(x, fb.alpha, 0)
    hi = _analyze_axis(x, fb.beta, 0)
    return Subbands(
        ll=_analyze_axis(lo, fb.alpha, 1),
        lh=_analyze_axis(lo, fb.beta, 1),
        hl=_analyze_axis(hi, fb.alpha, 1),
        hh=_analyze_axis(hi, fb.beta, 1),
    )


def idwt2d_level(bands: Subbands, fb: FilterBank) -> np.ndarray:
    """Exact inverse of :func:`dwt2d_level`."""
    shapes = {b.shape for b in bands}
    if len(shapes) != 1:
        raise DimensionError(f"subband shapes differ: {sorted(shapes)}")
    lo = _synthesize_axis(bands.ll, fb.alpha, 1) + _synthesize_axis(bands.lh, fb.beta, 1)
    hi = _synthesize_axis(bands.hl, fb.alpha, 1) + _synthesize_axis(bands.hh, fb.beta, 1)
    return _synthesize_axis(lo, fb.alpha, 0) + _synthesize_axis(hi, fb.beta, 0)


def dwt2d_multi(x: np.ndarray, fb: FilterBank, depth: int) -> WaveletPyramid:
    """Recursive decomposition: re-analyze the ll band ``depth`` times."""
    if depth < 1:
        raise ConfigError(f"depth must be >= 1, got {depth}")
    x = np.asarray(x)
    if x.ndim < 2:
        raise DimensionError(f"dwt2d_multi needs at least 2 dims, got {x.shape}")
    factor = 2 ** depth
    if x.shape[0] % factor or x.shape[1] % factor:
        raise DimensionError(
            f"spatial dims {x.shape[:2]} not divisible by 2^{depth}")
    levels = []
    cur = x
    for _ in range(depth):
        bands = dwt2d_level(cur, fb)
        levels.append(bands)
        cur = bands.ll
    return WaveletPyramid(levels)


def idwt2d_multi(pyr: WaveletPyramid, fb: FilterBank) -> np.ndarray:
    """Invert a multi-level pyramid back to the full-resolution array."""
    if pyr.depth < 1:
        raise DimensionError("empty pyramid")
    cur = pyr.levels[-1].ll
    for bands in reversed(pyr.levels):
        cur = idwt2d_level(Subbands(cur, bands.lh, bands.hl, bands.hh), fb)
    return cur


# ---------------------------------------------------------------- masking


@dataclass(frozen=True)
class MaskConfig:
    """Dual-domain masking parameters.

    depth:          number of decomposition levels.
    low_freq_ratio: fraction of deepest low-pass cells zeroed (Bernoulli).
                    Training curricula stay in [0, 0.5]; the full [0, 1]
                    range is accepted for analysis use.
    mask_cell:      cell size (in low-pass coefficients) zeroed as a unit.
    seed:           RNG seed for the Bernoulli draw.
    """

    depth: int = 3
    low_freq_ratio: float = 0.5
    mask_cell: tuple[int, int] = (1, 1)
    seed: int = 0

    def __post_init__(self):
        if self.depth < 1:
            raise ConfigError(f"depth must be >= 1, got {self.depth}")
        if not 0.0 <= self.low_freq_ratio <= 1.0:
            raise ConfigError(
                f"low_freq_ratio must be in [0, 1], got {self.low_freq_ratio}")
        ch, cw = self.mask_cell
        if ch < 1 or cw < 1:
            raise ConfigError(f"mask_cell entries must be >= 1, got {self.mask_cell}")


class MaskedFrame(NamedTuple):
    frame: np.ndarray  # same shape as the input
    mask: np.ndarray   # bool [h_ll, w_ll]; True = coefficient kept


def low_freq_mask(shape: tuple[int, int], ratio: float,
                  cell: tuple[int, int], seed: int) -> np.ndarray:
    """Bernoulli keep-mask over ``shape``, drawn per cell then tiled.

    Each cell is kept with probability 1 - ratio; ratio 0 keeps everything
    and ratio 1 masks everything, both exactly.
    """
    h, w = shape
    ch, cw = cell
    rng = np.random.default_rng(seed)
    gh, gw = -(-h // ch), -(-w // cw)
    keep_cells = rng.random((gh, gw)) >= ratio
    keep = np.repeat(np.repeat(keep_cells, ch, axis=0), cw, axis=1)
    return keep[:h, :w]


def _pad_to_multiple(x: np.ndarray, factor: int) -> np.ndarray:
    """Reflect-pad the two leading spatial dims up to multiples of ``factor``."""
    h, w = x.shape[0], x.shape[1]
    eh = (-h) % factor
    ew = (-w) % factor
    if eh == 0 and ew == 0:
        return x
    if h < 2 or w < 2:
        raise DimensionError(f"frame {x.shape} too small to reflect-pad")
    pad = [(0, eh), (0, ew)] + [(0, 0)] * (x.ndim - 2)
    return np.pad(x, pad, mode="reflect")


def apply_wmim(x: np.ndarray, cfg: MaskConfig, fb: FilterBank) -> MaskedFrame:
    """Dual-domain masking of one frame.

    Decomposes ``x`` ([H, W] or [H, W, C]) to ``cfg.depth`` levels, zeroes
    all detail subbands, zeroes a Bernoulli fraction of the deepest
    low-pass band (one draw shared by all channels), and reconstructs.
    Frames whose sides are not multiples of 2^depth are reflect-padded for
    the transform and cropped back afterwards.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim not in (2, 3):
        raise DimensionError(f"expected [H,W] or [H,W,C], got {x.shape}")
    h, w = x.shape[0], x.shape[1]
    xp = _pad_to_multiple(x, 2 ** cfg.depth)
    pyr = dwt2d_multi(xp, fb, cfg.depth)

    deep_ll = pyr.levels[-1].ll
    keep = low_freq_mask(deep_ll.shape[:2], cfg.low_freq_ratio,
                         cfg.mask_cell, cfg.seed)
    keep_b = keep.reshape(keep.shape + (1,) * (deep_ll.ndim - 2))

    masked_levels = [Subbands(lev.ll, np.zeros_like(lev.lh),
                              np.zeros_like(lev.hl), np.zeros_like(lev.hh))
                     for lev in pyr.levels]
    last = masked_levels[-1]
    masked_levels[-1] = Subbands(deep_ll * keep_b, last.lh, last.hl, last.hh)

    recon = idwt2d_multi(WaveletPyramid(masked_levels), fb)
    return MaskedFrame(np.ascontiguousarray(recon[:h, :w]), keep)


def apply_spatial_mask(x: np.ndarray, ratio: float, seed: int,
                       cell: tuple[int, int] = (1, 1)) -> np.ndarray:
    """Pixel-domain Bernoulli masking (the baseline dual-domain replaces)."""
    x = np.asarray(x, dtype=np.float64)
    if not 0.0 <= ratio <= 1.0:
        raise ConfigError(f"ratio must be in [0, 1], got {ratio}")
    keep = low_freq_mask(x.shape[:2], ratio, cell, seed)
    return x * keep.reshape(keep.shape + (1,) * (x.ndim - 2))


@dataclass(frozen=True)
class CurriculumSchedule:
    """Linear ramp of the low-pass masking ratio over pretraining."""

    total_steps: int
    max_ratio: float = 0.5

    def __post_init__(self):
        if self.total_steps < 1:
            raise ConfigError(f"total_steps must be >= 1, got {self.total_steps}")
        if not 0.0 <= self.max_ratio <= 1.0:
            raise ConfigError(f"max_ratio must be in [0, 1], got {self.max_ratio}")


def curriculum_ratio(step: int, sched: CurriculumSchedule) -> float:
    """Masking ratio at ``step``: 0 at step 0, ``max_ratio`` at the end.

    Steps outside [0, total_steps] clamp to the endpoints.
    """
    s = min(max(int(step), 0), sched.total_steps)
    return sched.max_ratio * s / sched.total_steps


def band_energies(pyr: WaveletPyramid) -> dict[str, float]:
    """Per-band energy summary, keyed like ``'L2.hh'`` / ``'L3.ll'``."""
    out: dict[str, float] = {}
    for i, lev in enumerate(pyr.levels, start=1):
        for name in ("lh", "hl", "hh"):
            band = getattr(lev, name)
            out[f"L{i}.{name}"] = float(np.sum(band.astype(np.float64) ** 2))
    out[f"L{pyr.depth}.ll"] = float(
        np.sum(pyr.levels[-1].ll.astype(np.float64) ** 2))
    return out
