"""Pure-numpy convolution kernels.

These are the fallback implementations used when numba is unavailable or
when ``WAVEHDR_BACKEND=numpy`` is set.  Forward passes are vectorised with
``sliding_window_view`` + ``einsum``; input-gradient passes loop over the
(small) kernel taps only, so they stay vectorised over all data axes.

All functions take *pre-padded* inputs: padding/cropping is handled by the
caller (``wavehdr.tensor``) so both backends share identical semantics.
Convolutions are cross-correlations (no kernel flip), the usual CNN
convention.
"""

import numpy as np

NAME = "numpy"


def _windows2d(xp: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    """View of all kernel-sized windows of ``xp``: [N,C,Ho,Wo,kh,kw]."""
    v = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
    return v[:, :, ::stride, ::stride]


def _windows3d(xp: np.ndarray, kt: int, kh: int, kw: int, stride: int) -> np.ndarray:
    v = np.lib.stride_tricks.sliding_window_view(xp, (kt, kh, kw), axis=(2, 3, 4))
    return v[:, :, ::stride, ::stride, ::stride]


def conv2d_forward(xp: np.ndarray, w: np.ndarray, stride: int) -> np.ndarray:
    """xp: [N,C,Hp,Wp] (already padded), w: [O,C,kh,kw] -> [N,O,Ho,Wo]."""
    v = _windows2d(xp, w.shape[2], w.shape[3], stride)
    return np.einsum("nchwij,ocij->nohw", v, w, optimize=True)


def conv2d_backward_weight(xp: np.ndarray, gy: np.ndarray, kh: int, kw: int,
                           stride: int) -> np.ndarray:
    v = _windows2d(xp, kh, kw, stride)
    return np.einsum("nohw,nchwij->ocij", gy, v, optimize=True)


def conv2d_backward_input(gy: np.ndarray, w: np.ndarray, stride: int,
                          hp: int, wp: int) -> np.ndarray:
    """Gradient w.r.t. the padded input, shape [N,C,hp,wp]."""
    n = gy.shape[0]
    _, c, kh, kw = w.shape
    ho, wo = gy.shape[2], gy.shape[3]
    gxp = np.zeros((n, c, hp, wp), dtype=gy.dtype)
    for i in range(kh):
        for j in range(kw):
            patch = np.einsum("nohw,oc->nchw", gy, w[:, :, i, j], optimize=True)
            gxp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += patch
    return gxp


def conv3d_forward(xp: np.ndarray, w: np.ndarray, stride: int) -> np.ndarray:
    """xp: [N,C,Tp,Hp,Wp] (already padded), w: [O,C,kt,kh,kw] -> [N,O,To,Ho,Wo]."""
    v = _windows3d(xp, w.shape[2], w.shape[3], w.shape[4], stride)
    return np.einsum("ncthwuij,ocuij->nothw", v, w, optimize=True)


def conv3d_backward_weight(xp: np.ndarray, gy: np.ndarray, kt: int, kh: int,
                           kw: int, stride: int) -> np.ndarray:
    v = _windows3d(xp, kt, kh, kw, stride)
    return np.einsum("nothw,ncthwuij->ocuij", gy, v, optimize=True)


def conv3d_backward_input(gy: np.ndarray, w: np.ndarray, stride: int,
                          tp: int, hp: int, wp: int) -> np.ndarray:
    n = gy.shape[0]
    _, c, kt, kh, kw = w.shape
    to, ho, wo = gy.shape[2], gy.shape[3], gy.shape[4]
    gxp = np.zeros((n, c, tp, hp, wp), dtype=gy.dtype)
    for u in range(kt):
        for i in range(kh):
            for j in range(kw):
                patch = np.einsum("nothw,oc->ncthw", gy, w[:, :, u, i, j],
                                  optimize=True)
                gxp[:, :,
                    u:u + stride * to:stride,
                    i:i + stride * ho:stride,
                    j:j + stride * wo:stride] += patch
    return gxp
