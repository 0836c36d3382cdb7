"""Systematic gradient audit: analytic backward vs. central differences.

Two sweeps:

* :func:`audit_ops` -- every differentiable primitive gets a small random
  case; each input's backward gradient is compared against
  :func:`wavehdr.tensor.finite_diff_grad`.
* :func:`audit_model` -- a toy full model (attention path active, memory
  pre-seeded) is differentiated through the fine-tuning loss; every
  parameter tensor is perturbed elementwise.

Errors are *tensor-scale relative*: max|a - b| / max(max|a|, max|b|,
floor).  The floor (1e-7) sits far above central-difference truncation
noise at h = 1e-4 and far below any real gradient scale, so a genuine
backward bug cannot hide and FD noise cannot fail a correct op.

``inject_fault=True`` wires a deliberately sign-flipped adjoint into one
relu (op sweep) and negates one parameter's gradient (model sweep): a
self-test proving the comparison actually catches wrong gradients.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from wavehdr import losses as L
from wavehdr import model as M
from wavehdr import tensor as T

DEFAULT_TOL = 1e-4
DEFAULT_STEP = 1e-4
ERROR_FLOOR = 1e-7


@dataclass(frozen=True)
class AuditResult:
    name: str
    max_rel_err: float
    passed: bool


def relative_error(a: np.ndarray, b: np.ndarray,
                   floor: float = ERROR_FLOOR) -> float:
    """max|a - b| scaled by the larger of the two tensors' magnitudes."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    scale = max(float(np.abs(a).max(initial=0.0)),
                float(np.abs(b).max(initial=0.0)), floor)
    return float(np.abs(a - b).max(initial=0.0) / scale)


def _faulty_relu(a):
    """relu whose backward spills a sign-flipped adjoint (test fixture)."""
    a = T._as_tensor(a)
    keep = a.data > 0
    data = np.where(keep, a.data, 0.0)

    def backward(g, adjoint):
        T._spill(adjoint, a, -(g * keep))  # wrong on purpose

    return T._make(data, (a,), backward)


# ---------------------------------------------------------------- op sweep


def _op_cases(rng, relu_fn):
    """(name, base_array, scalar_fn) triples covering every primitive.

    Each fn multiplies by a fixed random probe before reducing, so the
    output gradient is dense and structured (a bare mean would make many
    backward bugs invisible).  All probes/constants are created once, out
    here -- the fns are re-evaluated many times by the differencer and must
    be pure functions of their argument.
    """
    def probe(shape):
        return T.Tensor(rng.normal(size=shape))

    r33 = probe((3, 3))
    r34 = probe((3, 4))
    r43 = probe((4, 3))
    r213 = probe((2, 1, 3))
    r46 = probe((4, 6))
    r423 = probe((4, 2, 3))
    r283 = probe((2, 8, 3))
    r2243 = probe((2, 2, 4, 3))
    r23 = probe((2, 3))
    r243 = probe((2, 4, 3))
    rconv2 = probe((2, 3, 4, 4))
    rconv3 = probe((1, 2, 3, 4, 4))
    rps = probe((1, 1, 4, 4))
    rpu = probe((1, 4, 2, 2))
    b34 = probe((3, 4))
    mm_rhs = probe((4, 3))
    w2 = probe((3, 2, 3, 3))
    w3 = probe((2, 2, 3, 3, 3))
    x2 = probe((2, 2, 7, 7))
    x3 = probe((1, 2, 3, 4, 4))

    away_from_kinks = rng.normal(size=(3, 4))
    away_from_kinks[np.abs(away_from_kinks) < 0.2] += 0.5

    return [
        ("add", rng.normal(size=(3, 4)),
         lambda x: ((x + b34) * r34).sum()),
        ("sub", rng.normal(size=(3, 4)),
         lambda x: ((x - b34) * r34).sum()),
        ("mul", rng.normal(size=(3, 4)),
         lambda x: ((x * b34) * r34).sum()),
        ("div", rng.normal(size=(3, 4)) + 3.0,
         lambda x: ((b34 / x) * r34).sum()),
        ("matmul", rng.normal(size=(3, 4)),
         lambda x: (T.matmul(x, mm_rhs) * r33).sum()),
        ("relu", away_from_kinks,
         lambda x: (relu_fn(x) * r34).sum()),
        ("abs", away_from_kinks.copy(),
         lambda x: (T.absolute(x) * r34).sum()),
        ("softmax", rng.normal(size=(3, 4)),
         lambda x: (T.softmax(x, axis=1) * r34).sum()),
        ("reduce_mean", rng.normal(size=(2, 4, 3)),
         lambda x: (x.mean(axes=(0,)) * r43).sum()),
        ("reduce_sum", rng.normal(size=(2, 4, 3)),
         lambda x: (x.sum(axes=(1,), keepdims=True) * r213).sum()),
        ("reshape", rng.normal(size=(2, 4, 3)),
         lambda x: (x.reshape((4, 6)) * r46).sum()),
        ("transpose", rng.normal(size=(2, 4, 3)),
         lambda x: (x.transpose((1, 0, 2)) * r423).sum()),
        ("concat", rng.normal(size=(2, 4, 3)),
         lambda x: (T.concat([x, x * 2.0], axis=1) * r283).sum()),
        ("stack", rng.normal(size=(2, 4, 3)),
         lambda x: (T.stack([x, x * 0.5], axis=0) * r2243).sum()),
        ("getitem", rng.normal(size=(2, 4, 3)),
         lambda x: (x[1, 1:3, :] * r23).sum() + (x[0] * r243[0]).sum()),
        ("pixel_shuffle", rng.normal(size=(1, 4, 2, 2)),
         lambda x: (T.pixel_shuffle(x, 2) * rps).sum()),
        ("pixel_unshuffle", rng.normal(size=(1, 1, 4, 4)),
         lambda x: (T.pixel_unshuffle(x, 2) * rpu).sum()),
        ("conv2d_input", rng.normal(size=(2, 2, 7, 7)),
         lambda x: (T.conv2d(x, w2, stride=2, pad=1) * rconv2).sum()),
        ("conv2d_weight", rng.normal(size=(3, 2, 3, 3)),
         lambda w: (T.conv2d(x2, w, stride=2, pad=1) * rconv2).sum()),
        ("conv3d_input", rng.normal(size=(1, 2, 3, 4, 4)),
         lambda x: (T.conv3d(x, w3, stride=1, pad=1) * rconv3).sum()),
        ("conv3d_weight", rng.normal(size=(2, 2, 3, 3, 3)),
         lambda w: (T.conv3d(x3, w, stride=1, pad=1) * rconv3).sum()),
    ]


def audit_ops(seed: int = 0, h: float = DEFAULT_STEP, tol: float = DEFAULT_TOL,
              inject_fault: bool = False) -> list[AuditResult]:
    """Check every primitive's backward pass against finite differences."""
    rng = np.random.default_rng(seed)
    relu_fn = _faulty_relu if inject_fault else T.relu

    results = []
    for name, base, fn in _op_cases(rng, relu_fn):
        x = T.Tensor(np.asarray(base, dtype=np.float64), requires_grad=True)
        out = fn(x)
        out.backward()
        fd = T.finite_diff_grad(fn, x, h=h)
        err = relative_error(x.grad, fd)
        results.append(AuditResult(name, err, err <= tol))
    return results


# ---------------------------------------------------------------- model sweep


class _SealedStore(M.MemoryStore):
    """Fixed-content store for the audit.

    Model gradients stop at memory entries by design (entries are detached
    when written), so the analytic gradient treats memory as constant.
    For finite differences to measure the same function, the store must
    actually *be* constant: writes after construction are dropped.
    """

    def __init__(self, max_len: int, entries: list[np.ndarray]):
        super().__init__(max_len)
        for e in entries:
            super().insert("audit", e)
        self._sealed = True

    def insert(self, scene_id, entry):
        if not getattr(self, "_sealed", False):
            super().insert(scene_id, entry)


def _toy_setup(seed: int):
    """Small full model with an active multi-entry attention path."""
    cfg = M.ModelConfig(channels=4, num_resblocks=3, groups=3,
                        temporal_kernel=3, memory_len=2)
    params = M.ModelParams.initialize(cfg, seed=seed)
    rng = np.random.default_rng(seed + 1)
    x = T.Tensor(rng.uniform(size=(2, 3, 8, 8)))
    y = T.Tensor(rng.uniform(0.0, 2.0, size=(2, 3, 8, 8)))
    entries = [rng.normal(size=(16, cfg.reduced_channels)) for _ in range(2)]
    return params, x, y, cfg, entries


def audit_model(seed: int = 0, h: float = DEFAULT_STEP, tol: float = DEFAULT_TOL,
                inject_fault: bool = False) -> list[AuditResult]:
    """Elementwise finite-difference check of every model parameter.

    The loss is the phase-2 objective through the full forward pass over a
    sealed two-entry memory (see :class:`_SealedStore`): gradients stop at
    memory entries by design, so the differenced function must hold them
    fixed too.
    """
    params, x, y, cfg, entries = _toy_setup(seed)
    lcfg = L.LossConfig()

    def loss_tensor():
        store = _SealedStore(cfg.memory_len, entries)
        return L.total_loss(
            M.phase2_forward(x, "audit", store, params), y, lcfg)

    def loss_value() -> float:
        with T.no_grad():
            return loss_tensor().item()

    params.zero_grad()
    loss_tensor().backward()

    results = []
    for idx, (name, p) in enumerate(params.items()):
        if p.grad is None:
            results.append(AuditResult(name, np.inf, False))
            continue
        analytic = p.grad.copy()
        if inject_fault and idx == 0:
            analytic = -analytic  # deliberately corrupted adjoint
        flat = p.data.reshape(-1)
        fd = np.zeros(flat.size)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = loss_value()
            flat[i] = orig - h
            fm = loss_value()
            flat[i] = orig
            fd[i] = (fp - fm) / (2.0 * h)
        err = relative_error(analytic, fd.reshape(p.shape))
        results.append(AuditResult(name, err, err <= tol))
    return results


def summarize(results: list[AuditResult]) -> tuple[int, int, float]:
    """(#passed, #total, worst error)."""
    worst = max((r.max_rel_err for r in results), default=0.0)
    return sum(r.passed for r in results), len(results), worst
