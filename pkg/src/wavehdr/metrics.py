"""Evaluation metrics (plain numpy; nothing here is differentiated).

* :func:`psnr` -- peak signal-to-noise ratio with an exact-match infinity.
* :func:`ssim_windowed` -- the reference sliding-window SSIM (11x11
  Gaussian window, sigma 1.5), averaged over channels and frames.
* :func:`delta_e_itp` -- colour difference in ICtCp space for HDR signals:
  linear RGB (BT.2020 primaries assumed) -> LMS -> PQ -> ICtCp, with the
  720 * sqrt(dI^2 + 0.25 dCt^2 + dCp^2) distance, averaged over pixels.
* :func:`gamut_hull_area` -- area of the convex hull of a frame's
  chromaticity footprint; used to quantify how masking shrinks colour
  coverage.
"""

from __future__ import annotations

import numpy as np

from wavehdr.errors import DimensionError

# ---------------------------------------------------------------- PSNR


def psnr(pred: np.ndarray, target: np.ndarray, peak: float = 1.0) -> float:
    pred, target = np.asarray(pred, np.float64), np.asarray(target, np.float64)
    if pred.shape != target.shape:
        raise DimensionError(f"psnr shapes differ: {pred.shape} vs {target.shape}")
    mse = float(np.mean((pred - target) ** 2))
    if mse == 0.0:
        return float("inf")
    return 10.0 * np.log10(peak * peak / mse)


# ---------------------------------------------------------------- SSIM

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 1e-4  # (0.01 * range)^2 for unit range
SSIM_C2 = 9e-4


def _gaussian_window(size: int, sigma: float) -> np.ndarray:
    half = (size - 1) / 2.0
    x = np.arange(size, dtype=np.float64) - half
    w = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return w / w.sum()


def _filter_valid(img: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Separable 'valid' correlation of a [H, W] image with w (x) w."""
    n = w.shape[0]
    h, wd = img.shape
    tmp = np.zeros((h - n + 1, wd), dtype=np.float64)
    for i in range(n):
        tmp += w[i] * img[i:h - n + 1 + i, :]
    out = np.zeros((h - n + 1, wd - n + 1), dtype=np.float64)
    for j in range(n):
        out += w[j] * tmp[:, j:wd - n + 1 + j]
    return out


def _ssim_map(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    w = _gaussian_window(SSIM_WINDOW, SSIM_SIGMA)
    mu_a = _filter_valid(a, w)
    mu_b = _filter_valid(b, w)
    var_a = _filter_valid(a * a, w) - mu_a ** 2
    var_b = _filter_valid(b * b, w) - mu_b ** 2
    cov = _filter_valid(a * b, w) - mu_a * mu_b
    num = (2 * mu_a * mu_b + SSIM_C1) * (2 * cov + SSIM_C2)
    den = (mu_a ** 2 + mu_b ** 2 + SSIM_C1) * (var_a + var_b + SSIM_C2)
    return num / den


def ssim_windowed(pred: np.ndarray, target: np.ndarray) -> float:
    """Mean local SSIM over channels (and frames, if a clip is passed).

    Accepts [H, W], [H, W, C], or [T, H, W, C]; spatial dims must be at
    least the window size.
    """
    pred, target = np.asarray(pred, np.float64), np.asarray(target, np.float64)
    if pred.shape != target.shape:
        raise DimensionError(f"ssim shapes differ: {pred.shape} vs {target.shape}")
    if pred.ndim == 2:
        pred, target = pred[None, ..., None], target[None, ..., None]
    elif pred.ndim == 3:
        pred, target = pred[None], target[None]
    if pred.ndim != 4:
        raise DimensionError(f"ssim_windowed: bad input shape {pred.shape}")
    if pred.shape[1] < SSIM_WINDOW or pred.shape[2] < SSIM_WINDOW:
        raise DimensionError(
            f"frames {pred.shape[1:3]} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window")
    vals = [
        _ssim_map(pred[t, :, :, c], target[t, :, :, c]).mean()
        for t in range(pred.shape[0])
        for c in range(pred.shape[3])
    ]
    return float(np.mean(vals))


# ---------------------------------------------------------------- ICtCp colour difference

# Linear BT.2020 RGB -> cone-like LMS (coefficients are exact /4096 rationals).
_RGB_TO_LMS = np.array([
    [1688.0, 2146.0, 262.0],
    [683.0, 2951.0, 462.0],
    [99.0, 309.0, 3688.0],
]) / 4096.0

# L'M'S' -> ICtCp (I row is exact halves; Ct/Cp rows are /4096 rationals).
_LMS_TO_ICTCP = np.array([
    [2048.0, 2048.0, 0.0],
    [6610.0, -13613.0, 7003.0],
    [17933.0, -17390.0, -543.0],
]) / 4096.0

# PQ (SMPTE ST 2084) constants.
_PQ_M1 = 2610.0 / 16384.0
_PQ_M2 = 2523.0 / 4096.0 * 128.0  # 78.84375
_PQ_C1 = 3424.0 / 4096.0          # 0.8359375
_PQ_C2 = 2413.0 / 4096.0 * 32.0   # 18.8515625
_PQ_C3 = 2392.0 / 4096.0 * 32.0   # 18.6875

PQ_PEAK_NITS = 10000.0

_negative_clips = 0


def negative_clip_count() -> int:
    """How many negative linear-light samples have been clamped so far."""
    return _negative_clips


def reset_negative_clip_count() -> None:
    global _negative_clips
    _negative_clips = 0


def pq_encode(y: np.ndarray) -> np.ndarray:
    """Perceptual-quantizer OETF of absolute luminance normalized by 10000 nits."""
    y = np.clip(y, 0.0, None)
    p = y ** _PQ_M1
    return ((_PQ_C1 + _PQ_C2 * p) / (1.0 + _PQ_C3 * p)) ** _PQ_M2


def rgb_to_ictcp(rgb: np.ndarray, peak_nits: float = 1000.0) -> np.ndarray:
    """[..., 3] linear RGB (1.0 == peak_nits) -> [..., 3] ICtCp.

    Negative linear values (possible from a network output) are clamped to
    zero; the module-level counter tracks how many were hit.
    """
    global _negative_clips
    rgb = np.asarray(rgb, np.float64)
    if rgb.shape[-1] != 3:
        raise DimensionError(f"expected [..., 3] RGB, got {rgb.shape}")
    neg = int(np.count_nonzero(rgb < 0.0))
    if neg:
        _negative_clips += neg
        rgb = np.clip(rgb, 0.0, None)
    lms = rgb @ _RGB_TO_LMS.T
    lms_pq = pq_encode(lms * (peak_nits / PQ_PEAK_NITS))
    return lms_pq @ _LMS_TO_ICTCP.T


def delta_e_itp(pred: np.ndarray, target: np.ndarray,
                peak_nits: float = 1000.0) -> float:
    """Mean ICtCp colour difference: 720 sqrt(dI^2 + 0.25 dCt^2 + dCp^2)."""
    pred, target = np.asarray(pred), np.asarray(target)
    if pred.shape != target.shape:
        raise DimensionError(
            f"delta_e_itp shapes differ: {pred.shape} vs {target.shape}")
    a = rgb_to_ictcp(pred, peak_nits)
    b = rgb_to_ictcp(target, peak_nits)
    d = a - b
    de = 720.0 * np.sqrt(d[..., 0] ** 2 + 0.25 * d[..., 1] ** 2 + d[..., 2] ** 2)
    return float(de.mean())


# ---------------------------------------------------------------- gamut hull


def chromaticity_points(frame: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    """Project pixels with meaningful intensity onto the (r, g) chroma plane.

    frame: [H, W, 3] linear RGB.  Pixels whose channel sum is <= eps (e.g.
    masked-out or black pixels) carry no chromaticity and are excluded.
    """
    frame = np.asarray(frame, np.float64)
    if frame.ndim != 3 or frame.shape[2] != 3:
        raise DimensionError(f"expected [H,W,3], got {frame.shape}")
    flat = frame.reshape(-1, 3)
    s = flat.sum(axis=1)
    keep = s > eps
    pts = flat[keep]
    return pts[:, :2] / s[keep, None]


def gamut_hull_area(frame: np.ndarray, eps: float = 1e-6) -> float:
    """Area of the convex hull of the frame's chromaticity footprint.

    Returns 0.0 for degenerate footprints (fewer than three distinct
    points, or collinear points).
    """
    from scipy.spatial import ConvexHull, QhullError

    pts = chromaticity_points(frame, eps)
    if pts.shape[0] < 3:
        return 0.0
    try:
        hull = ConvexHull(pts)
    except QhullError:
        return 0.0
    return float(hull.volume)  # for 2-D inputs "volume" is the area
