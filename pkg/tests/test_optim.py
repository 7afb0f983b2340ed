"""Optimizer behavior: Adam convergence, bias correction, clipping, decay
exemptions, and the warmup/decay schedule."""
import numpy as np
import pytest

from goaldial.neural.optim import (Adam, clip_global_norm, global_grad_norm,
                                   warmup_linear_decay)
from goaldial.neural.params import ParamStore


def test_adam_minimizes_quadratic():
    store = ParamStore(seed=0)
    p = store.add("x", np.array([5.0, -3.0]))
    opt = Adam(store, lr=0.1)
    target = np.array([1.0, 2.0])
    for _ in range(400):
        store.zero_grad()
        p.grad += 2.0 * (p.value - target)
        opt.step()
    assert p.value == pytest.approx(target, abs=1e-3)


def test_adam_first_step_is_lr_sized():
    # with bias correction the very first update has magnitude ~lr
    store = ParamStore(seed=0)
    p = store.add("x", np.zeros(3))
    opt = Adam(store, lr=0.5)
    p.grad += np.array([1e-4, 3.0, -7.0])
    opt.step()
    assert np.abs(p.value) == pytest.approx(0.5, rel=1e-3)


def test_weight_decay_skips_vectors():
    store = ParamStore(seed=0)
    mat = store.add("w", np.full((2, 2), 4.0))
    vec = store.add("b", np.full(2, 4.0))
    opt = Adam(store, lr=0.01, weight_decay=0.1)
    # zero gradients: the only movement comes from decay
    opt.step()
    assert np.all(mat.value < 4.0)
    assert np.all(vec.value == 4.0)


def test_clip_global_norm_scales_and_reports():
    store = ParamStore(seed=0)
    a = store.add("a", np.zeros(3))
    b = store.add("b", np.zeros((2, 2)))
    a.grad += np.array([3.0, 0.0, 0.0])
    b.grad += np.array([[0.0, 4.0], [0.0, 0.0]])
    norm = clip_global_norm(store, 1.0)
    assert norm == pytest.approx(5.0)
    assert global_grad_norm(store) == pytest.approx(1.0, rel=1e-6)
    # already under the cap: untouched
    norm2 = clip_global_norm(store, 10.0)
    assert norm2 == pytest.approx(1.0, rel=1e-6)
    assert global_grad_norm(store) == pytest.approx(1.0, rel=1e-6)


def test_warmup_schedule_shape():
    total = 100
    mults = [warmup_linear_decay(s, total, warmup_frac=0.1) for s in range(total)]
    assert mults[0] > 0.0
    assert max(mults) == pytest.approx(1.0)
    assert mults[9] == pytest.approx(1.0)      # end of 10-step warmup
    assert all(x <= y + 1e-12 for x, y in zip(mults[:9], mults[1:10]))
    assert all(x >= y - 1e-12 for x, y in zip(mults[10:], mults[11:]))
    assert mults[-1] == pytest.approx(0.0, abs=0.02)
    assert warmup_linear_decay(0, 1) > 0.0
