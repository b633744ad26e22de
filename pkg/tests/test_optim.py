import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cgnet.optim import AdamW, AdamWState, LrSchedule, adamw_step, clip_grad_norm, cosine_lr
from cgnet.tensor import NonFiniteError, Tensor


def test_first_step_moves_by_lr():
    (p,) = adamw_step([np.array([1.0])], [np.array([1.0])], AdamWState(lr=0.1))
    assert p[0] == pytest.approx(0.9, abs=1e-7)


def test_zero_grad_no_decay_is_noop():
    p0 = np.array([1.0, -2.0])
    state = AdamWState(lr=0.1)
    for _ in range(3):
        (p0_new,) = adamw_step([p0], [np.zeros(2)], state)
        np.testing.assert_array_equal(p0_new, p0)


def test_decoupled_decay():
    (p,) = adamw_step([np.array([1.0])], [np.array([0.0])], AdamWState(lr=0.1, weight_decay=0.1))
    assert p[0] == pytest.approx(0.99, abs=1e-12)


def test_bias_correction_second_step():
    state = AdamWState(lr=0.1)
    p = [np.array([1.0])]
    p = adamw_step(p, [np.array([1.0])], state)
    p = adamw_step(p, [np.array([1.0])], state)
    # constant gradient: corrected moments stay at 1, so each step is lr
    assert p[0][0] == pytest.approx(0.8, abs=1e-6)


def test_errors():
    with pytest.raises(ValueError):
        adamw_step([np.ones(2)], [np.ones(3)], AdamWState())
    with pytest.raises(NonFiniteError):
        adamw_step([np.ones(1)], [np.array([np.nan])], AdamWState())
    with pytest.raises(ValueError):
        AdamWState(beta1=1.0)


def test_cosine_endpoints():
    s = LrSchedule(1e-3, 1e-7, 1000)
    assert cosine_lr(0, s) == pytest.approx(1e-3)
    assert cosine_lr(1000, s) == pytest.approx(1e-7)
    assert cosine_lr(500, s) == pytest.approx((1e-3 + 1e-7) / 2)
    with pytest.raises(ValueError):
        cosine_lr(1001, s)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 5000), st.data())
def test_cosine_is_monotone(total, data):
    s = LrSchedule(1e-3, 1e-7, total)
    t = data.draw(st.integers(0, total - 1))
    assert cosine_lr(t + 1, s) <= cosine_lr(t, s)
    assert 1e-7 - 1e-18 <= cosine_lr(t, s) <= 1e-3 + 1e-18


def test_clip_grad_norm():
    a = Tensor(np.zeros(2), requires_grad=True)
    a.grad = np.array([3.0, 4.0])
    assert clip_grad_norm([a], 1.0) == pytest.approx(5.0)
    assert np.linalg.norm(a.grad) == pytest.approx(1.0)


def test_adamw_class_zero_lr_keeps_weights():
    w = Tensor(np.array([0.5, -0.5]), requires_grad=True)
    opt = AdamW([w], lr=0.0, weight_decay=0.1)
    for _ in range(5):
        opt.zero_grad()
        (w * w).sum().backward()
        opt.step()
    np.testing.assert_array_equal(w.data, [0.5, -0.5])
