"""Timing comparison of the numba and numpy convolution backends.

Runs each kernel (conv2d/conv3d forward, weight gradient, input gradient)
on a few representative shapes, checks that the two implementations agree,
and prints per-kernel timings plus the speedup.

Usage::

    python3 benchmarks/bench_conv.py [--repeats N] [--quick]
"""

import argparse
import time

import numpy as np

from wavehdr import _conv_numba as nb
from wavehdr import _conv_numpy as pnp

SHAPES_2D = [
    # n, c, o, h, w, k, stride
    (2, 8, 8, 64, 64, 3, 1),
    (4, 3, 16, 32, 32, 3, 2),
    (1, 16, 16, 96, 96, 3, 1),
]
SHAPES_3D = [
    # n, c, o, t, h, w, kt, k, stride
    (1, 8, 8, 4, 32, 32, 3, 3, 1),
    (2, 8, 4, 6, 24, 24, 3, 3, 1),
]


def timeit(fn, repeats):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return out, best


def bench_case(label, make_args, kernels, repeats):
    args = make_args()
    rows = []
    for name, np_fn, nb_fn in kernels:
        nb_fn(*args[name])  # warm the JIT cache outside the timed region
        a, t_np = timeit(lambda: np_fn(*args[name]), repeats)
        b, t_nb = timeit(lambda: nb_fn(*args[name]), repeats)
        err = float(np.max(np.abs(a - b)))
        assert err < 1e-10, f"{label}/{name}: backends disagree by {err}"
        rows.append((f"{label} {name}", t_np, t_nb))
    return rows


def args_2d(rng, n, c, o, h, w, k, stride):
    xp = rng.standard_normal((n, c, h, w))
    wt = rng.standard_normal((o, c, k, k))
    y = pnp.conv2d_forward(xp, wt, stride)
    gy = rng.standard_normal(y.shape)
    return {
        "forward": (xp, wt, stride),
        "grad_w": (xp, gy, k, k, stride),
        "grad_x": (gy, wt, stride, h, w),
    }


def args_3d(rng, n, c, o, t, h, w, kt, k, stride):
    xp = rng.standard_normal((n, c, t, h, w))
    wt = rng.standard_normal((o, c, kt, k, k))
    y = pnp.conv3d_forward(xp, wt, stride)
    gy = rng.standard_normal(y.shape)
    return {
        "forward": (xp, wt, stride),
        "grad_w": (xp, gy, kt, k, k, stride),
        "grad_x": (gy, wt, stride, t, h, w),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=5,
                    help="timing repetitions per kernel (best-of)")
    ap.add_argument("--quick", action="store_true",
                    help="smallest shape only")
    opts = ap.parse_args()
    rng = np.random.default_rng(0)

    kernels_2d = [
        ("forward", pnp.conv2d_forward, nb.conv2d_forward),
        ("grad_w", pnp.conv2d_backward_weight, nb.conv2d_backward_weight),
        ("grad_x", pnp.conv2d_backward_input, nb.conv2d_backward_input),
    ]
    kernels_3d = [
        ("forward", pnp.conv3d_forward, nb.conv3d_forward),
        ("grad_w", pnp.conv3d_backward_weight, nb.conv3d_backward_weight),
        ("grad_x", pnp.conv3d_backward_input, nb.conv3d_backward_input),
    ]

    shapes_2d = SHAPES_2D[:1] if opts.quick else SHAPES_2D
    shapes_3d = SHAPES_3D[:1] if opts.quick else SHAPES_3D

    rows = []
    for shp in shapes_2d:
        label = "conv2d n%dc%do%d %dx%d k%d s%d" % shp
        rows += bench_case(label, lambda s=shp: args_2d(rng, *s),
                           kernels_2d, opts.repeats)
    for shp in shapes_3d:
        label = "conv3d n%dc%do%d t%d %dx%d kt%d k%d s%d" % shp
        rows += bench_case(label, lambda s=shp: args_3d(rng, *s),
                           kernels_3d, opts.repeats)

    width = max(len(r[0]) for r in rows)
    print(f"{'case':<{width}}  {'numpy':>10}  {'numba':>10}  {'speedup':>8}")
    for name, t_np, t_nb in rows:
        print(f"{name:<{width}}  {t_np * 1e3:>8.2f}ms  {t_nb * 1e3:>8.2f}ms  "
              f"{t_np / t_nb:>7.2f}x")
    total_np = sum(r[1] for r in rows)
    total_nb = sum(r[2] for r in rows)
    print(f"{'total':<{width}}  {total_np * 1e3:>8.2f}ms  "
          f"{total_nb * 1e3:>8.2f}ms  {total_np / total_nb:>7.2f}x")


if __name__ == "__main__":
    main()
