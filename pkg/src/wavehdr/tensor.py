"""A small reverse-mode autodiff engine over numpy arrays.

Design notes
------------
* A :class:`Tensor` wraps an ``np.ndarray`` plus an optional closure that
  propagates the output adjoint to its parents.  Graphs are built eagerly
  by the op functions below and walked once, iteratively, by
  :meth:`Tensor.backward` (no recursion, so deep unrolled graphs are fine).
* Each ``backward()`` call computes fresh adjoints in a scratch table and
  then **adds** them into ``.grad``, so repeated calls accumulate -- the
  usual convention that makes gradient accumulation across micro-batches
  trivial.
* Everything defaults to float64.  ``set_default_dtype(np.float32)`` flips
  the promotion target for newly created tensors; computations simply
  follow numpy's type promotion after that.
* Convolutions dispatch their inner loops through ``wavehdr.backend`` so
  the same graph code runs against either the numba or the numpy kernels.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

from wavehdr import backend
from wavehdr.errors import DimensionError, GraphError

_FLOAT_DTYPES = (np.float32, np.float64)
_default_dtype = np.float64
_grad_enabled = True


def set_default_dtype(dtype) -> None:
    """Set the dtype given to tensors created from non-float data."""
    global _default_dtype
    dt = np.dtype(dtype).type
    if dt not in _FLOAT_DTYPES:
        raise DimensionError(f"default dtype must be float32 or float64, got {dtype}")
    _default_dtype = dt


def get_default_dtype():
    return _default_dtype


class no_grad:
    """Context manager that disables graph recording.

    Ops executed inside still compute values but produce constant tensors,
    which keeps inference and finite-difference probes cheap.
    """

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data)
        if arr.dtype.type not in _FLOAT_DTYPES:
            arr = arr.astype(_default_dtype)
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable | None = None

    # -- basic introspection -------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        if self.data.size != 1:
            raise DimensionError(f"item() needs a scalar, got shape {self.shape}")
        return float(self.data.reshape(()))

    def numpy(self) -> np.ndarray:
        """The raw value array (shared, not copied)."""
        return self.data

    def detach(self) -> "Tensor":
        """Same data, cut loose from the graph."""
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}{flag})"

    # -- operator sugar ------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def sum(self, axes=None, keepdims: bool = False):
        return reduce_sum(self, axes, keepdims)

    def mean(self, axes=None, keepdims: bool = False):
        return reduce_mean(self, axes, keepdims)

    def reshape(self, shape):
        return reshape(self, shape)

    def transpose(self, axes=None):
        return transpose(self, axes)

    # -- backward pass -------------------------------------------------------

    def backward(self) -> None:
        """Reverse-mode sweep from a scalar output.

        Populates/accumulates ``.grad`` on every tensor in the graph that
        has ``requires_grad``.
        """
        if self.data.size != 1:
            raise GraphError(
                f"backward() requires a scalar output, got shape {self.shape}")
        if not self.requires_grad:
            raise GraphError("backward() on a tensor that does not require grad")

        # Iterative post-order topological sort.
        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in visited:
                    stack.append((p, False))

        # Fresh adjoints for this sweep, accumulated into .grad at visit time.
        adjoint: dict[int, np.ndarray] = {
            id(self): np.ones_like(self.data)}
        for node in reversed(topo):
            g = adjoint.pop(id(node), None)
            if g is None:
                continue  # unreachable from the output along grad-enabled edges
            node.grad = g if node.grad is None else node.grad + g
            if node._backward is not None:
                node._backward(g, adjoint)


# -- graph-construction helpers ----------------------------------------------

def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, parents: Sequence[Tensor],
          backward: Callable | None) -> Tensor:
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _spill(adjoint: dict, t: Tensor, g: np.ndarray) -> None:
    """Accumulate a contribution to a parent's adjoint."""
    if not t.requires_grad:
        return
    key = id(t)
    if key in adjoint:
        adjoint[key] = adjoint[key] + g
    else:
        adjoint[key] = g


def _sum_to_shape(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Undo numpy broadcasting: reduce ``g`` back down to ``shape``."""
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# -- elementwise ops -----------------------------------------------------------

def _broadcast_op(a, b, fwd, da, db) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    try:
        data = fwd(a.data, b.data)
    except ValueError as e:
        raise DimensionError(
            f"operands with shapes {a.shape} and {b.shape} do not broadcast") from e

    def backward(g, adjoint):
        _spill(adjoint, a, _sum_to_shape(da(g, a.data, b.data), a.shape))
        _spill(adjoint, b, _sum_to_shape(db(g, a.data, b.data), b.shape))

    return _make(data, (a, b), backward)


def add(a, b) -> Tensor:
    return _broadcast_op(a, b, lambda x, y: x + y,
                         lambda g, x, y: g,
                         lambda g, x, y: g)


def sub(a, b) -> Tensor:
    return _broadcast_op(a, b, lambda x, y: x - y,
                         lambda g, x, y: g,
                         lambda g, x, y: -g)


def mul(a, b) -> Tensor:
    return _broadcast_op(a, b, lambda x, y: x * y,
                         lambda g, x, y: g * y,
                         lambda g, x, y: g * x)


def div(a, b) -> Tensor:
    return _broadcast_op(a, b, lambda x, y: x / y,
                         lambda g, x, y: g / y,
                         lambda g, x, y: -g * x / (y * y))


def relu(a) -> Tensor:
    a = _as_tensor(a)
    keep = a.data > 0
    data = np.where(keep, a.data, 0.0).astype(a.data.dtype, copy=False)

    def backward(g, adjoint):
        _spill(adjoint, a, g * keep)

    return _make(data, (a,), backward)


def absolute(a) -> Tensor:
    """|a| with the zero-subgradient convention sign(0) = 0."""
    a = _as_tensor(a)
    data = np.abs(a.data)

    def backward(g, adjoint):
        _spill(adjoint, a, g * np.sign(a.data))

    return _make(data, (a,), backward)


def softmax(a, axis: int = -1) -> Tensor:
    """Numerically stable softmax along ``axis`` (max-shifted exp)."""
    a = _as_tensor(a)
    if a.ndim == 0:
        raise DimensionError("softmax needs at least one axis")
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    data = e / e.sum(axis=axis, keepdims=True)

    def backward(g, adjoint):
        dot = (g * data).sum(axis=axis, keepdims=True)
        _spill(adjoint, a, data * (g - dot))

    return _make(data, (a,), backward)


# -- reductions ---------------------------------------------------------------

def _norm_axes(axes, ndim: int) -> tuple[int, ...]:
    if axes is None:
        return tuple(range(ndim))
    if isinstance(axes, (int, np.integer)):
        axes = (int(axes),)
    axes = tuple(int(ax) for ax in axes)
    if len(axes) == 0:
        raise DimensionError("reduction over an empty axis tuple")
    out = []
    for ax in axes:
        if ax < 0:
            ax += ndim
        if not 0 <= ax < ndim:
            raise DimensionError(f"axis {ax} out of range for ndim {ndim}")
        out.append(ax)
    if len(set(out)) != len(out):
        raise DimensionError(f"duplicate reduction axes {axes}")
    return tuple(out)


def _expand_reduced(g: np.ndarray, shape: tuple[int, ...],
                    axes: tuple[int, ...], keepdims: bool) -> np.ndarray:
    if not keepdims:
        for ax in sorted(axes):
            g = np.expand_dims(g, ax)
    return np.broadcast_to(g, shape)


def reduce_sum(a, axes=None, keepdims: bool = False) -> Tensor:
    a = _as_tensor(a)
    axes_n = _norm_axes(axes, a.ndim)
    if any(a.shape[ax] == 0 for ax in axes_n):
        raise DimensionError(f"reduction over zero-sized axis in shape {a.shape}")
    data = a.data.sum(axis=axes_n, keepdims=keepdims)

    def backward(g, adjoint):
        _spill(adjoint, a,
               _expand_reduced(g, a.shape, axes_n, keepdims).astype(g.dtype, copy=False))

    return _make(data, (a,), backward)


def reduce_mean(a, axes=None, keepdims: bool = False) -> Tensor:
    a = _as_tensor(a)
    axes_n = _norm_axes(axes, a.ndim)
    count = 1
    for ax in axes_n:
        count *= a.shape[ax]
    if count == 0:
        raise DimensionError(f"mean over zero-sized axis in shape {a.shape}")
    data = a.data.mean(axis=axes_n, keepdims=keepdims)

    def backward(g, adjoint):
        _spill(adjoint, a,
               _expand_reduced(g, a.shape, axes_n, keepdims) / count)

    return _make(data, (a,), backward)


# -- shape ops -----------------------------------------------------------------

def reshape(a, shape) -> Tensor:
    a = _as_tensor(a)
    try:
        data = a.data.reshape(shape)
    except ValueError as e:
        raise DimensionError(f"cannot reshape {a.shape} to {shape}") from e

    def backward(g, adjoint):
        _spill(adjoint, a, g.reshape(a.shape))

    return _make(data, (a,), backward)


def transpose(a, axes=None) -> Tensor:
    a = _as_tensor(a)
    if axes is None:
        perm = tuple(range(a.ndim))[::-1]
    else:
        perm = tuple(int(ax) for ax in axes)
        if sorted(perm) != list(range(a.ndim)):
            raise DimensionError(f"{axes} is not a permutation of {a.ndim} axes")
    data = a.data.transpose(perm)
    inv = np.argsort(perm)

    def backward(g, adjoint):
        _spill(adjoint, a, g.transpose(inv))

    return _make(data, (a,), backward)


def concat(tensors: Iterable, axis: int = 0) -> Tensor:
    ts = [_as_tensor(t) for t in tensors]
    if not ts:
        raise DimensionError("concat of an empty sequence")
    try:
        data = np.concatenate([t.data for t in ts], axis=axis)
    except ValueError as e:
        raise DimensionError(f"concat shapes mismatch: {[t.shape for t in ts]}") from e
    ax = axis if axis >= 0 else axis + ts[0].ndim
    sizes = [t.shape[ax] for t in ts]
    offsets = np.cumsum([0] + sizes)

    def backward(g, adjoint):
        for t, lo, hi in zip(ts, offsets[:-1], offsets[1:]):
            sl = [slice(None)] * g.ndim
            sl[ax] = slice(lo, hi)
            _spill(adjoint, t, g[tuple(sl)])

    return _make(data, tuple(ts), backward)


def stack(tensors: Iterable, axis: int = 0) -> Tensor:
    ts = [_as_tensor(t) for t in tensors]
    if not ts:
        raise DimensionError("stack of an empty sequence")
    shapes = {t.shape for t in ts}
    if len(shapes) != 1:
        raise DimensionError(f"stack needs equal shapes, got {sorted(shapes)}")
    data = np.stack([t.data for t in ts], axis=axis)
    ax = axis if axis >= 0 else axis + data.ndim

    def backward(g, adjoint):
        for i, t in enumerate(ts):
            _spill(adjoint, t, np.take(g, i, axis=ax))

    return _make(data, tuple(ts), backward)


def getitem(a, idx) -> Tensor:
    """Basic (slice/int/tuple) indexing with scatter-add backward."""
    a = _as_tensor(a)
    try:
        data = a.data[idx]
    except IndexError as e:
        raise DimensionError(f"index {idx!r} invalid for shape {a.shape}") from e

    def backward(g, adjoint):
        full = np.zeros_like(a.data)
        np.add.at(full, idx, g)
        _spill(adjoint, a, full)

    return _make(data, (a,), backward)


def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError(
            f"matmul needs ndim >= 2 operands, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul inner dims differ: {a.shape} @ {b.shape}")
    try:
        data = a.data @ b.data
    except ValueError as e:
        raise DimensionError(f"matmul batch shapes differ: {a.shape} @ {b.shape}") from e

    def backward(g, adjoint):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        _spill(adjoint, a, _sum_to_shape(ga, a.shape))
        _spill(adjoint, b, _sum_to_shape(gb, b.shape))

    return _make(data, (a, b), backward)


# -- pixel shuffle -------------------------------------------------------------

def _shuffle_data(x: np.ndarray, r: int) -> np.ndarray:
    n, c, h, w = x.shape
    co = c // (r * r)
    y = x.reshape(n, co, r, r, h, w)
    y = y.transpose(0, 1, 4, 2, 5, 3)  # n, co, h, r, w, r
    return y.reshape(n, co, h * r, w * r)


def _unshuffle_data(x: np.ndarray, r: int) -> np.ndarray:
    n, c, h, w = x.shape
    y = x.reshape(n, c, h // r, r, w // r, r)
    y = y.transpose(0, 1, 3, 5, 2, 4)  # n, c, r, r, h/r, w/r
    return y.reshape(n, c * r * r, h // r, w // r)


def pixel_shuffle(a, r: int) -> Tensor:
    """[N, C*r^2, H, W] -> [N, C, H*r, W*r] sub-pixel rearrangement."""
    a = _as_tensor(a)
    if r < 1:
        raise DimensionError(f"upscale factor must be >= 1, got {r}")
    if a.ndim != 4 or a.shape[1] % (r * r) != 0:
        raise DimensionError(
            f"pixel_shuffle needs [N,C*r^2,H,W] with r={r}, got {a.shape}")
    data = _shuffle_data(a.data, r)

    def backward(g, adjoint):
        _spill(adjoint, a, _unshuffle_data(g, r))

    return _make(data, (a,), backward)


def pixel_unshuffle(a, r: int) -> Tensor:
    """[N, C, H*r, W*r] -> [N, C*r^2, H, W]; exact inverse of pixel_shuffle."""
    a = _as_tensor(a)
    if r < 1:
        raise DimensionError(f"downscale factor must be >= 1, got {r}")
    if a.ndim != 4 or a.shape[2] % r != 0 or a.shape[3] % r != 0:
        raise DimensionError(
            f"pixel_unshuffle needs [N,C,H*r,W*r] with r={r}, got {a.shape}")
    data = _unshuffle_data(a.data, r)

    def backward(g, adjoint):
        _spill(adjoint, a, _shuffle_data(g, r))

    return _make(data, (a,), backward)


# -- convolutions ----------------------------------------------------------------

def _pad_tuple(pad, n: int) -> tuple[int, ...]:
    if isinstance(pad, (int, np.integer)):
        return (int(pad),) * n
    pad = tuple(int(p) for p in pad)
    if len(pad) != n:
        raise DimensionError(f"padding {pad} must have {n} entries")
    return pad


def conv2d(x, w, b=None, stride: int = 1, pad=0) -> Tensor:
    """2-D convolution (cross-correlation), NCHW layout, zero padding.

    x: [N,C,H,W], w: [O,C,kh,kw], optional b: [O].
    """
    x, w = _as_tensor(x), _as_tensor(w)
    if x.ndim != 4 or w.ndim != 4:
        raise DimensionError(f"conv2d expects 4-D x and w, got {x.shape}, {w.shape}")
    if x.shape[1] != w.shape[1]:
        raise DimensionError(
            f"conv2d channel mismatch: input {x.shape[1]}, kernel {w.shape[1]}")
    if stride < 1:
        raise DimensionError(f"stride must be >= 1, got {stride}")
    ph, pw = _pad_tuple(pad, 2)
    kh, kw = w.shape[2], w.shape[3]
    hp, wp = x.shape[2] + 2 * ph, x.shape[3] + 2 * pw
    if kh > hp or kw > wp:
        raise DimensionError(
            f"kernel {(kh, kw)} larger than padded input {(hp, wp)}")
    xp = np.pad(x.data, ((0, 0), (0, 0), (ph, ph), (pw, pw))) if (ph or pw) else x.data
    data = backend.conv2d_forward(xp, w.data, stride)
    bt = None
    if b is not None:
        bt = _as_tensor(b)
        if bt.shape != (w.shape[0],):
            raise DimensionError(
                f"bias shape {bt.shape} != ({w.shape[0]},)")
        data = data + bt.data.reshape(1, -1, 1, 1)

    parents = (x, w) if bt is None else (x, w, bt)

    def backward(g, adjoint):
        g = np.ascontiguousarray(g)
        if bt is not None:
            _spill(adjoint, bt, g.sum(axis=(0, 2, 3)))
        if w.requires_grad:
            _spill(adjoint, w, backend.conv2d_backward_weight(xp, g, kh, kw, stride))
        if x.requires_grad:
            gxp = backend.conv2d_backward_input(g, w.data, stride, hp, wp)
            if ph or pw:
                gxp = gxp[:, :, ph:hp - ph, pw:wp - pw]
            _spill(adjoint, x, gxp)

    return _make(data, parents, backward)


def conv3d(x, w, b=None, stride: int = 1, pad=0) -> Tensor:
    """3-D convolution over [N,C,T,H,W] with kernel [O,C,kt,kh,kw]."""
    x, w = _as_tensor(x), _as_tensor(w)
    if x.ndim != 5 or w.ndim != 5:
        raise DimensionError(f"conv3d expects 5-D x and w, got {x.shape}, {w.shape}")
    if x.shape[1] != w.shape[1]:
        raise DimensionError(
            f"conv3d channel mismatch: input {x.shape[1]}, kernel {w.shape[1]}")
    if stride < 1:
        raise DimensionError(f"stride must be >= 1, got {stride}")
    pt, ph, pw = _pad_tuple(pad, 3)
    kt, kh, kw = w.shape[2], w.shape[3], w.shape[4]
    tp = x.shape[2] + 2 * pt
    hp = x.shape[3] + 2 * ph
    wp = x.shape[4] + 2 * pw
    if kt > tp or kh > hp or kw > wp:
        raise DimensionError(
            f"kernel {(kt, kh, kw)} larger than padded input {(tp, hp, wp)}")
    if pt or ph or pw:
        xp = np.pad(x.data, ((0, 0), (0, 0), (pt, pt), (ph, ph), (pw, pw)))
    else:
        xp = x.data
    data = backend.conv3d_forward(xp, w.data, stride)
    bt = None
    if b is not None:
        bt = _as_tensor(b)
        if bt.shape != (w.shape[0],):
            raise DimensionError(f"bias shape {bt.shape} != ({w.shape[0]},)")
        data = data + bt.data.reshape(1, -1, 1, 1, 1)

    parents = (x, w) if bt is None else (x, w, bt)

    def backward(g, adjoint):
        g = np.ascontiguousarray(g)
        if bt is not None:
            _spill(adjoint, bt, g.sum(axis=(0, 2, 3, 4)))
        if w.requires_grad:
            _spill(adjoint, w,
                   backend.conv3d_backward_weight(xp, g, kt, kh, kw, stride))
        if x.requires_grad:
            gxp = backend.conv3d_backward_input(g, w.data, stride, tp, hp, wp)
            if pt or ph or pw:
                gxp = gxp[:, :, pt:tp - pt, ph:hp - ph, pw:wp - pw]
            _spill(adjoint, x, gxp)

    return _make(data, parents, backward)


# -- finite differences ----------------------------------------------------------

def finite_diff_grad(f: Callable[[Tensor], "Tensor | float"], x,
                     h: float = 1e-4) -> np.ndarray:
    """Central-difference gradient of scalar ``f`` at ``x``, elementwise.

    ``f`` receives a fresh float64 Tensor each evaluation; graph recording
    is disabled during the probes.  O(2 * x.size) forward passes.
    """
    base = np.array(x.data if isinstance(x, Tensor) else x, dtype=np.float64)
    grad = np.zeros_like(base)
    flat = base.reshape(-1)
    gflat = grad.reshape(-1)

    def probe() -> float:
        with no_grad():
            out = f(Tensor(base.copy()))
        return out.item() if isinstance(out, Tensor) else float(out)

    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = probe()
        flat[i] = orig - h
        fm = probe()
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * h)
    return grad
