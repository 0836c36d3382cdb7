"""The gradient audit itself: error metric, op sweep, fault injection."""

import numpy as np
import pytest

from wavehdr import gradcheck as G


# ---------------------------------------------------------------- error metric


def test_relative_error_zero_for_identical(rng):
    a = rng.standard_normal((4, 5))
    assert G.relative_error(a, a.copy()) == 0.0


def test_relative_error_is_scale_aware():
    a = np.array([1000.0, -500.0])
    b = a * (1 + 1e-6)
    # absolute gap is 1e-3 but relative to tensor scale it is 1e-6
    assert G.relative_error(a, b) == pytest.approx(1e-6, rel=1e-3)


def test_relative_error_floor_avoids_zero_division():
    a = np.zeros(3)
    b = np.full(3, 1e-9)
    # denominator floors at 1e-7, so tiny absolute noise stays small
    assert G.relative_error(a, b) == pytest.approx(1e-2)


def test_relative_error_symmetry(rng):
    a = rng.standard_normal(7)
    b = a + rng.standard_normal(7) * 1e-5
    assert G.relative_error(a, b) == G.relative_error(b, a)


# ---------------------------------------------------------------- op sweep


def test_op_sweep_passes():
    results = G.audit_ops(seed=0)
    passed, total, worst = G.summarize(results)
    assert passed == total == len(results)
    assert total >= 20  # every differentiable op family is covered
    assert worst < G.DEFAULT_TOL


def test_op_sweep_catches_injected_fault():
    results = G.audit_ops(seed=0, inject_fault=True)
    bad = [r for r in results if not r.passed]
    assert bad, "sign-flipped relu adjoint went unnoticed"
    assert all("relu" in r.name for r in bad)
    # and the honest ops still pass
    assert any(r.passed for r in results)


def test_op_sweep_is_deterministic():
    a = G.audit_ops(seed=3)
    b = G.audit_ops(seed=3)
    assert [(r.name, r.max_rel_err) for r in a] \
        == [(r.name, r.max_rel_err) for r in b]


# ---------------------------------------------------------------- model sweep


@pytest.mark.slow
def test_model_sweep_catches_injected_fault():
    results = G.audit_model(seed=0, inject_fault=True)
    assert any(not r.passed for r in results)


def test_audit_result_fields():
    results = G.audit_ops(seed=1)
    r = results[0]
    assert isinstance(r.name, str)
    assert r.max_rel_err >= 0.0
    assert r.passed == (r.max_rel_err <= G.DEFAULT_TOL)
