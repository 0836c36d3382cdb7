"""Forward-value checks for the tensor ops.

Convolutions are compared against an independent quadruple-loop oracle
written directly in this file; everything else against plain numpy.
"""

import numpy as np
import pytest

from wavehdr import tensor as T
from wavehdr.errors import DimensionError


# ---------------------------------------------------------------- oracles


def conv2d_oracle(x, w, b=None, stride=1, pad=0):
    """Naive O(everything) 2-D cross-correlation, NCHW."""
    n, c, h, wd = x.shape
    o, _, kh, kw = w.shape
    ph = pw = pad if isinstance(pad, int) else None
    if ph is None:
        ph, pw = pad
    xp = np.zeros((n, c, h + 2 * ph, wd + 2 * pw), dtype=x.dtype)
    xp[:, :, ph:ph + h, pw:pw + wd] = x
    ho = (h + 2 * ph - kh) // stride + 1
    wo = (wd + 2 * pw - kw) // stride + 1
    y = np.zeros((n, o, ho, wo), dtype=x.dtype)
    for b_ in range(n):
        for oc in range(o):
            for oy in range(ho):
                for ox in range(wo):
                    s = 0.0
                    for ic in range(c):
                        for i in range(kh):
                            for j in range(kw):
                                s += (xp[b_, ic, oy * stride + i, ox * stride + j]
                                      * w[oc, ic, i, j])
                    y[b_, oc, oy, ox] = s + (b[oc] if b is not None else 0.0)
    return y


def conv3d_oracle(x, w, b=None, stride=1, pad=0):
    n, c, t, h, wd = x.shape
    o, _, kt, kh, kw = w.shape
    if isinstance(pad, int):
        pt = ph = pw = pad
    else:
        pt, ph, pw = pad
    xp = np.zeros((n, c, t + 2 * pt, h + 2 * ph, wd + 2 * pw), dtype=x.dtype)
    xp[:, :, pt:pt + t, ph:ph + h, pw:pw + wd] = x
    to = (t + 2 * pt - kt) // stride + 1
    ho = (h + 2 * ph - kh) // stride + 1
    wo = (wd + 2 * pw - kw) // stride + 1
    y = np.zeros((n, o, to, ho, wo), dtype=x.dtype)
    for b_ in range(n):
        for oc in range(o):
            for ot in range(to):
                for oy in range(ho):
                    for ox in range(wo):
                        s = 0.0
                        for ic in range(c):
                            for u in range(kt):
                                for i in range(kh):
                                    for j in range(kw):
                                        s += (xp[b_, ic, ot * stride + u,
                                                 oy * stride + i, ox * stride + j]
                                              * w[oc, ic, u, i, j])
                        y[b_, oc, ot, oy, ox] = s + (b[oc] if b is not None else 0.0)
    return y


# ---------------------------------------------------------------- elementwise


def test_add_broadcast(rng):
    a = rng.normal(size=(3, 1, 4))
    b = rng.normal(size=(5, 4))
    out = T.add(T.Tensor(a), T.Tensor(b))
    np.testing.assert_array_equal(out.data, a + b)


def test_scalar_coercion(rng):
    a = T.Tensor(rng.normal(size=(2, 3)))
    np.testing.assert_array_equal((a + 2.5).data, a.data + 2.5)
    np.testing.assert_array_equal((2.5 * a).data, 2.5 * a.data)
    np.testing.assert_array_equal((1.0 / (a + 10.0)).data, 1.0 / (a.data + 10.0))
    np.testing.assert_array_equal((-a).data, -a.data)


def test_mul_div_sub(rng):
    a, b = rng.normal(size=(4, 4)), rng.normal(size=(4, 4)) + 3.0
    np.testing.assert_array_equal((T.Tensor(a) * T.Tensor(b)).data, a * b)
    np.testing.assert_allclose((T.Tensor(a) / T.Tensor(b)).data, a / b)
    np.testing.assert_array_equal((T.Tensor(a) - T.Tensor(b)).data, a - b)


def test_incompatible_broadcast_raises():
    with pytest.raises(DimensionError):
        T.add(T.Tensor(np.zeros((3, 4))), T.Tensor(np.zeros((5, 4))))


def test_relu_and_abs():
    x = np.array([-2.0, -0.5, 0.0, 0.5, 2.0])
    np.testing.assert_array_equal(T.relu(T.Tensor(x)).data, np.maximum(x, 0.0))
    np.testing.assert_array_equal(T.absolute(T.Tensor(x)).data, np.abs(x))


def test_softmax_rows_sum_to_one(rng):
    x = rng.normal(size=(6, 9)) * 20.0  # large values: stability matters
    s = T.softmax(T.Tensor(x), axis=1).data
    np.testing.assert_allclose(s.sum(axis=1), np.ones(6), atol=1e-12)
    assert np.all(s >= 0)
    # invariant under a constant shift of the logits
    s2 = T.softmax(T.Tensor(x + 123.0), axis=1).data
    np.testing.assert_allclose(s, s2, atol=1e-12)


# ---------------------------------------------------------------- reductions


def test_reductions_match_numpy(rng):
    x = rng.normal(size=(3, 4, 5))
    np.testing.assert_allclose(T.reduce_sum(T.Tensor(x)).data, x.sum())
    np.testing.assert_allclose(T.reduce_mean(T.Tensor(x), axes=(0, 2)).data,
                               x.mean(axis=(0, 2)))
    np.testing.assert_allclose(
        T.reduce_sum(T.Tensor(x), axes=1, keepdims=True).data,
        x.sum(axis=1, keepdims=True))


def test_reduction_bad_axes(rng):
    x = T.Tensor(rng.normal(size=(3, 4)))
    with pytest.raises(DimensionError):
        T.reduce_mean(x, axes=())
    with pytest.raises(DimensionError):
        T.reduce_sum(x, axes=5)
    with pytest.raises(DimensionError):
        T.reduce_sum(x, axes=(0, 0))
    with pytest.raises(DimensionError):
        T.reduce_mean(T.Tensor(np.zeros((0, 3))), axes=0)


# ---------------------------------------------------------------- shape ops


def test_reshape_transpose(rng):
    x = rng.normal(size=(2, 3, 4))
    np.testing.assert_array_equal(T.reshape(T.Tensor(x), (6, 4)).data,
                                  x.reshape(6, 4))
    np.testing.assert_array_equal(T.transpose(T.Tensor(x), (2, 0, 1)).data,
                                  x.transpose(2, 0, 1))
    with pytest.raises(DimensionError):
        T.reshape(T.Tensor(x), (7, 4))
    with pytest.raises(DimensionError):
        T.transpose(T.Tensor(x), (0, 1, 1))


def test_concat_stack_getitem(rng):
    a, b = rng.normal(size=(2, 3)), rng.normal(size=(4, 3))
    np.testing.assert_array_equal(T.concat([T.Tensor(a), T.Tensor(b)], axis=0).data,
                                  np.concatenate([a, b], axis=0))
    np.testing.assert_array_equal(T.stack([T.Tensor(a), T.Tensor(a)], axis=1).data,
                                  np.stack([a, a], axis=1))
    x = T.Tensor(rng.normal(size=(5, 6)))
    np.testing.assert_array_equal(x[1:4, ::2].data, x.data[1:4, ::2])
    with pytest.raises(DimensionError):
        T.concat([T.Tensor(a), T.Tensor(rng.normal(size=(4, 2)))], axis=0)


def test_matmul(rng):
    a, b = rng.normal(size=(3, 4)), rng.normal(size=(4, 5))
    np.testing.assert_allclose(T.matmul(T.Tensor(a), T.Tensor(b)).data, a @ b)
    ab, bb = rng.normal(size=(2, 3, 4)), rng.normal(size=(2, 4, 5))
    np.testing.assert_allclose(T.matmul(T.Tensor(ab), T.Tensor(bb)).data, ab @ bb)
    with pytest.raises(DimensionError):
        T.matmul(T.Tensor(a), T.Tensor(a))
    with pytest.raises(DimensionError):
        T.matmul(T.Tensor(np.zeros(4)), T.Tensor(b))


def test_pixel_shuffle_roundtrip(rng):
    x = rng.normal(size=(2, 8, 3, 5))
    y = T.pixel_shuffle(T.Tensor(x), 2)
    assert y.shape == (2, 2, 6, 10)
    back = T.pixel_unshuffle(y, 2)
    np.testing.assert_array_equal(back.data, x)
    with pytest.raises(DimensionError):
        T.pixel_shuffle(T.Tensor(rng.normal(size=(1, 6, 2, 2))), 2)
    with pytest.raises(DimensionError):
        T.pixel_unshuffle(T.Tensor(rng.normal(size=(1, 3, 5, 4))), 2)


def test_pixel_shuffle_layout():
    # channel k of the input lands at spatial offset (k // r, k % r)
    x = np.zeros((1, 4, 1, 1))
    x[0, :, 0, 0] = [1.0, 2.0, 3.0, 4.0]
    y = T.pixel_shuffle(T.Tensor(x), 2).data
    np.testing.assert_array_equal(y[0, 0], [[1.0, 2.0], [3.0, 4.0]])


# ---------------------------------------------------------------- convolutions


@pytest.mark.parametrize("stride,pad", [(1, 0), (1, 1), (2, 1), (2, 0), (3, 2)])
def test_conv2d_matches_oracle(rng, stride, pad):
    x = rng.normal(size=(2, 3, 9, 8))
    w = rng.normal(size=(4, 3, 3, 3))
    b = rng.normal(size=(4,))
    got = T.conv2d(T.Tensor(x), T.Tensor(w), T.Tensor(b), stride=stride, pad=pad)
    want = conv2d_oracle(x, w, b, stride=stride, pad=pad)
    assert got.shape == want.shape
    np.testing.assert_allclose(got.data, want, atol=1e-12)


def test_conv2d_1x1_kernel(rng):
    x = rng.normal(size=(1, 6, 4, 4))
    w = rng.normal(size=(3, 6, 1, 1))
    got = T.conv2d(T.Tensor(x), T.Tensor(w))
    np.testing.assert_allclose(got.data, conv2d_oracle(x, w), atol=1e-12)


@pytest.mark.parametrize("stride,pad", [(1, 0), (1, (1, 1, 1)), (2, 1)])
def test_conv3d_matches_oracle(rng, stride, pad):
    x = rng.normal(size=(1, 2, 4, 6, 5))
    w = rng.normal(size=(3, 2, 3, 3, 3))
    b = rng.normal(size=(3,))
    got = T.conv3d(T.Tensor(x), T.Tensor(w), T.Tensor(b), stride=stride, pad=pad)
    want = conv3d_oracle(x, w, b, stride=stride, pad=pad)
    assert got.shape == want.shape
    np.testing.assert_allclose(got.data, want, atol=1e-12)


def test_conv_validation(rng):
    x = T.Tensor(rng.normal(size=(1, 3, 5, 5)))
    w_badc = T.Tensor(rng.normal(size=(2, 4, 3, 3)))
    with pytest.raises(DimensionError):
        T.conv2d(x, w_badc)
    w_big = T.Tensor(rng.normal(size=(2, 3, 7, 7)))
    with pytest.raises(DimensionError):
        T.conv2d(x, w_big)  # kernel larger than (unpadded) input
    w = T.Tensor(rng.normal(size=(2, 3, 3, 3)))
    with pytest.raises(DimensionError):
        T.conv2d(x, w, stride=0)
    with pytest.raises(DimensionError):
        T.conv2d(x, w, b=T.Tensor(np.zeros(3)))


# ---------------------------------------------------------------- dtype


def test_default_dtype_switch():
    try:
        T.set_default_dtype(np.float32)
        t = T.Tensor([1, 2, 3])
        assert t.dtype == np.float32
    finally:
        T.set_default_dtype(np.float64)
    assert T.Tensor([1]).dtype == np.float64
    # float inputs keep their dtype
    assert T.Tensor(np.zeros(3, dtype=np.float32)).dtype == np.float32
