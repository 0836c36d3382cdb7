"""Numba-compiled convolution kernels.

Same contract as ``wavehdr._conv_numpy`` (pre-padded inputs, stride on all
spatial axes, cross-correlation convention).  The loops are deliberately
plain: no ``prange`` and no ``fastmath`` so that results are bitwise
deterministic and match the summation order a naive implementation uses.

Importing this module raises ``ImportError`` when numba is missing; the
backend selector in ``wavehdr.backend`` handles the fallback.
"""

import numpy as np
from numba import njit

NAME = "numba"


@njit(cache=True)
def conv2d_forward(xp, w, stride):
    n, c, hp, wp = xp.shape
    o = w.shape[0]
    kh, kw = w.shape[2], w.shape[3]
    ho = (hp - kh) // stride + 1
    wo = (wp - kw) // stride + 1
    y = np.empty((n, o, ho, wo), dtype=xp.dtype)
    for b in range(n):
        for oc in range(o):
            for oy in range(ho):
                for ox in range(wo):
                    acc = 0.0
                    ybase = oy * stride
                    xbase = ox * stride
                    for ic in range(c):
                        for i in range(kh):
                            for j in range(kw):
                                acc += xp[b, ic, ybase + i, xbase + j] * w[oc, ic, i, j]
                    y[b, oc, oy, ox] = acc
    return y


@njit(cache=True)
def conv2d_backward_weight(xp, gy, kh, kw, stride):
    n, c = xp.shape[0], xp.shape[1]
    o, ho, wo = gy.shape[1], gy.shape[2], gy.shape[3]
    gw = np.zeros((o, c, kh, kw), dtype=gy.dtype)
    for b in range(n):
        for oc in range(o):
            for oy in range(ho):
                for ox in range(wo):
                    g = gy[b, oc, oy, ox]
                    ybase = oy * stride
                    xbase = ox * stride
                    for ic in range(c):
                        for i in range(kh):
                            for j in range(kw):
                                gw[oc, ic, i, j] += g * xp[b, ic, ybase + i, xbase + j]
    return gw


@njit(cache=True)
def conv2d_backward_input(gy, w, stride, hp, wp):
    n, o, ho, wo = gy.shape
    c, kh, kw = w.shape[1], w.shape[2], w.shape[3]
    gxp = np.zeros((n, c, hp, wp), dtype=gy.dtype)
    for b in range(n):
        for oc in range(o):
            for oy in range(ho):
                for ox in range(wo):
                    g = gy[b, oc, oy, ox]
                    ybase = oy * stride
                    xbase = ox * stride
                    for ic in range(c):
                        for i in range(kh):
                            for j in range(kw):
                                gxp[b, ic, ybase + i, xbase + j] += g * w[oc, ic, i, j]
    return gxp


@njit(cache=True)
def conv3d_forward(xp, w, stride):
    n, c, tp, hp, wp = xp.shape
    o = w.shape[0]
    kt, kh, kw = w.shape[2], w.shape[3], w.shape[4]
    to = (tp - kt) // stride + 1
    ho = (hp - kh) // stride + 1
    wo = (wp - kw) // stride + 1
    y = np.empty((n, o, to, ho, wo), dtype=xp.dtype)
    for b in range(n):
        for oc in range(o):
            for ot in range(to):
                for oy in range(ho):
                    for ox in range(wo):
                        acc = 0.0
                        tbase = ot * stride
                        ybase = oy * stride
                        xbase = ox * stride
                        for ic in range(c):
                            for u in range(kt):
                                for i in range(kh):
                                    for j in range(kw):
                                        acc += (xp[b, ic, tbase + u, ybase + i, xbase + j]
                                                * w[oc, ic, u, i, j])
                        y[b, oc, ot, oy, ox] = acc
    return y


@njit(cache=True)
def conv3d_backward_weight(xp, gy, kt, kh, kw, stride):
    n, c = xp.shape[0], xp.shape[1]
    o, to, ho, wo = gy.shape[1], gy.shape[2], gy.shape[3], gy.shape[4]
    gw = np.zeros((o, c, kt, kh, kw), dtype=gy.dtype)
    for b in range(n):
        for oc in range(o):
            for ot in range(to):
                for oy in range(ho):
                    for ox in range(wo):
                        g = gy[b, oc, ot, oy, ox]
                        tbase = ot * stride
                        ybase = oy * stride
                        xbase = ox * stride
                        for ic in range(c):
                            for u in range(kt):
                                for i in range(kh):
                                    for j in range(kw):
                                        gw[oc, ic, u, i, j] += g * xp[b, ic, tbase + u,
                                                                      ybase + i, xbase + j]
    return gw


@njit(cache=True)
def conv3d_backward_input(gy, w, stride, tp, hp, wp):
    n, o, to, ho, wo = gy.shape
    c, kt, kh, kw = w.shape[1], w.shape[2], w.shape[3], w.shape[4]
    gxp = np.zeros((n, c, tp, hp, wp), dtype=gy.dtype)
    for b in range(n):
        for oc in range(o):
            for ot in range(to):
                for oy in range(ho):
                    for ox in range(wo):
                        g = gy[b, oc, ot, oy, ox]
                        tbase = ot * stride
                        ybase = oy * stride
                        xbase = ox * stride
                        for ic in range(c):
                            for u in range(kt):
                                for i in range(kh):
                                    for j in range(kw):
                                        gxp[b, ic, tbase + u, ybase + i, xbase + j] += (
                                            g * w[oc, ic, u, i, j])
    return gxp
