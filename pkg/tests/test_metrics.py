"""Metric tests.

The colour-difference expectations below were frozen from an independent
scalar-at-a-time oracle implementing the published PQ/ICtCp constants
directly; identity cases (infinite PSNR, unit SSIM, zero colour
difference) are asserted exactly.
"""

import numpy as np
import pytest

from wavehdr import metrics as M
from wavehdr.errors import DimensionError

# (pred_pixel, target_pixel, expected mean dE at 1000-nit peak)
DE_ITP_FROZEN = [
    ((1.0, 1.0, 1.0), (1.0, 1.0, 1.0), 0.0),
    ((1.0, 0.0, 0.0), (0.0, 1.0, 0.0), 423.98481061154166),
    ((0.5, 0.5, 0.5), (0.55, 0.5, 0.45), 11.862093210457136),
    ((0.01, 0.02, 0.03), (0.012, 0.02, 0.028), 10.392057528186216),
    ((2.0, 1.5, 0.25), (1.9, 1.6, 0.3), 12.614728506302932),
]


# ---------------------------------------------------------------- PSNR


def test_psnr_identical_is_infinite(rng):
    x = rng.uniform(size=(4, 4, 3))
    assert M.psnr(x, x.copy()) == float("inf")


def test_psnr_hand_value():
    a = np.full((8, 8), 0.5)
    b = np.zeros((8, 8))
    assert M.psnr(a, b, peak=1.0) == pytest.approx(10 * np.log10(4.0))


def test_psnr_peak_scaling(rng):
    a, b = rng.uniform(size=(6, 6)), rng.uniform(size=(6, 6))
    assert M.psnr(2 * a, 2 * b, peak=2.0) == pytest.approx(M.psnr(a, b, peak=1.0))


def test_psnr_shape_mismatch():
    with pytest.raises(DimensionError):
        M.psnr(np.zeros((2, 2)), np.zeros((2, 3)))


# ---------------------------------------------------------------- SSIM


def test_ssim_windowed_identical_is_one(rng):
    x = rng.uniform(size=(16, 16, 3))
    assert M.ssim_windowed(x, x.copy()) == pytest.approx(1.0, abs=1e-12)


def test_ssim_windowed_noise_lowers_score(rng):
    a = rng.uniform(size=(20, 20))
    b = np.clip(a + rng.normal(scale=0.2, size=a.shape), 0, 1)
    s = M.ssim_windowed(a, b)
    assert 0.0 < s < 1.0


def test_ssim_windowed_matches_direct_loop(rng):
    # independent oracle: explicit per-window statistics, no separable trick
    a = rng.uniform(size=(13, 14))
    b = np.clip(a + rng.normal(scale=0.1, size=a.shape), 0, 1)
    w1 = np.exp(-((np.arange(11) - 5.0) ** 2) / (2 * 1.5 ** 2))
    w1 /= w1.sum()
    w2 = np.outer(w1, w1)
    vals = []
    for i in range(13 - 10):
        for j in range(14 - 10):
            pa = a[i:i + 11, j:j + 11]
            pb = b[i:i + 11, j:j + 11]
            ma, mb = (w2 * pa).sum(), (w2 * pb).sum()
            va = (w2 * pa * pa).sum() - ma * ma
            vb = (w2 * pb * pb).sum() - mb * mb
            cab = (w2 * pa * pb).sum() - ma * mb
            vals.append(((2 * ma * mb + 1e-4) * (2 * cab + 9e-4))
                        / ((ma * ma + mb * mb + 1e-4) * (va + vb + 9e-4)))
    assert M.ssim_windowed(a, b) == pytest.approx(np.mean(vals), abs=1e-12)


def test_ssim_windowed_too_small_raises(rng):
    x = rng.uniform(size=(8, 8))
    with pytest.raises(DimensionError):
        M.ssim_windowed(x, x)


# ---------------------------------------------------------------- colour difference


def test_pq_known_points():
    # PQ(0) is (c1)^m2 ~ 0.0000001 scale; PQ(1.0) == 1.0 exactly
    assert M.pq_encode(np.array(1.0)) == pytest.approx(1.0, abs=1e-12)
    # 100 nits (0.01 of full scale) is the canonical ~0.508 point
    assert M.pq_encode(np.array(0.01)) == pytest.approx(0.5081, abs=1e-4)


def test_ictcp_achromatic_has_zero_chroma():
    gray = np.full((4, 4, 3), 0.5)
    out = M.rgb_to_ictcp(gray, peak_nits=1000.0)
    np.testing.assert_allclose(out[..., 1:], 0.0, atol=1e-12)
    # frozen from the scratch oracle: I of 0.5 gray at 1000-nit peak
    np.testing.assert_allclose(out[..., 0], 0.67658481078338761, atol=1e-12)


@pytest.mark.parametrize("pred,target,expected", DE_ITP_FROZEN)
def test_delta_e_itp_frozen_values(pred, target, expected):
    a = np.tile(np.array(pred), (3, 5, 1))
    b = np.tile(np.array(target), (3, 5, 1))
    assert abs(M.delta_e_itp(a, b) - expected) <= 1e-6


def test_delta_e_itp_mixed_image_frozen():
    img1 = np.array([[(0.2, 0.4, 0.6), (1.0, 1.0, 1.0)],
                     [(0.0, 0.0, 0.0), (0.7, 0.1, 0.3)]])
    img2 = np.array([[(0.25, 0.38, 0.6), (0.9, 1.0, 1.0)],
                     [(0.0, 0.01, 0.0), (0.7, 0.15, 0.28)]])
    assert abs(M.delta_e_itp(img1, img2) - 68.960634856598844) <= 1e-6


def test_negative_inputs_clamped_and_counted():
    M.reset_negative_clip_count()
    bad = np.array([[[-0.1, 0.5, 0.5]]])
    good = np.array([[[0.0, 0.5, 0.5]]])
    assert M.delta_e_itp(bad, good) == pytest.approx(0.0, abs=1e-12)
    assert M.negative_clip_count() == 1
    M.reset_negative_clip_count()


def test_delta_e_symmetry(rng):
    a = rng.uniform(size=(5, 5, 3))
    b = rng.uniform(size=(5, 5, 3))
    assert M.delta_e_itp(a, b) == pytest.approx(M.delta_e_itp(b, a), abs=1e-12)


# ---------------------------------------------------------------- gamut hull


def test_gamut_area_of_primary_triangle():
    frame = np.zeros((2, 2, 3))
    frame[0, 0] = [1.0, 0.0, 0.0]  # chroma (1, 0)
    frame[0, 1] = [0.0, 1.0, 0.0]  # chroma (0, 1)
    frame[1, 0] = [0.0, 0.0, 1.0]  # chroma (0, 0)
    frame[1, 1] = [0.0, 0.0, 0.0]  # excluded (zero sum)
    assert M.gamut_hull_area(frame) == pytest.approx(0.5, abs=1e-12)


def test_gamut_degenerate_cases():
    assert M.gamut_hull_area(np.zeros((4, 4, 3))) == 0.0  # no points
    gray = np.full((4, 4, 3), 0.25)
    assert M.gamut_hull_area(gray) == 0.0  # single chroma point
    # collinear: shades along the red-green edge
    frame = np.zeros((1, 3, 3))
    frame[0, 0] = [1.0, 0.0, 0.0]
    frame[0, 1] = [0.5, 0.5, 0.0]
    frame[0, 2] = [0.0, 1.0, 0.0]
    assert M.gamut_hull_area(frame) == 0.0


def test_gamut_scale_invariance(rng):
    frame = rng.uniform(0.1, 1.0, size=(8, 8, 3))
    a = M.gamut_hull_area(frame)
    b = M.gamut_hull_area(frame * 7.5)
    assert a == pytest.approx(b, rel=1e-9)
    assert a > 0.0


def test_chromaticity_excludes_dim_pixels(rng):
    frame = rng.uniform(0.2, 1.0, size=(4, 4, 3))
    frame[0, 0] = 0.0
    frame[1, 1] = 1e-9
    pts = M.chromaticity_points(frame, eps=1e-6)
    assert pts.shape == (14, 2)
