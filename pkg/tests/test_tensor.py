import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from cgnet import functional as F
from cgnet.tensor import (NonFiniteError, Tensor, concat, finite_diff_grad, log, max_rel_error,
                          no_grad, stack, take, unbroadcast)


def test_square_sum_grad():
    x = Tensor([1.0, 2.0, 3.0], requires_grad=True)
    (x * x).sum().backward()
    np.testing.assert_allclose(x.grad, [2, 4, 6])


def test_sum_grad_is_ones():
    x = Tensor(np.random.default_rng(0).standard_normal((3, 4)), requires_grad=True)
    x.sum().backward()
    assert np.array_equal(x.grad, np.ones((3, 4)))


def test_grad_accumulates_over_reuse():
    x = Tensor([3.0], requires_grad=True)
    (x * x + x).sum().backward()
    np.testing.assert_allclose(x.grad, [7.0])


def test_backward_requires_scalar():
    x = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(ValueError):
        (x * 2).backward()


def test_broadcast_grad_reduced_to_operand_shape():
    a = Tensor(np.ones((2, 3)), requires_grad=True)
    b = Tensor(np.ones((1, 3)), requires_grad=True)
    (a * b).sum().backward()
    assert b.grad.shape == (1, 3)
    np.testing.assert_allclose(b.grad, [[2, 2, 2]])


def test_unbroadcast_leading_axes():
    assert unbroadcast(np.ones((4, 2, 3)), (3,)).tolist() == [8, 8, 8]


def test_no_grad_records_nothing():
    x = Tensor([1.0], requires_grad=True)
    with no_grad():
        y = x * 2
    assert y._parents == ()


def test_non_finite_raises():
    with pytest.raises(NonFiniteError):
        log(Tensor([-1.0]))


def test_scalar_mean_backward():
    x = Tensor(np.arange(6.0).reshape(2, 3), requires_grad=True)
    x.mean().backward()
    np.testing.assert_allclose(x.grad, np.full((2, 3), 1 / 6))


def test_take_concat_stack_grads():
    rng = np.random.default_rng(1)
    a = rng.standard_normal((2, 3))
    b = rng.standard_normal((2, 3))

    def f(t):
        return (stack([t, Tensor(b)], 1) ** 2).sum() + (take(t, [2, 0, 2], 1) * 3).sum() \
            + concat([t, t], 0).sum()

    t = Tensor(a, requires_grad=True)
    f(t).backward()
    assert max_rel_error(t.grad, finite_diff_grad(f, a)) < 1e-6


def test_finite_diff_examples():
    np.testing.assert_allclose(finite_diff_grad(lambda t: (t * t).sum(), np.array([1.0, 2.0]), 1e-5),
                               [2, 4], rtol=1e-8)
    np.testing.assert_allclose(finite_diff_grad(lambda t: t.sum(), np.ones(4)), 1.0, rtol=1e-8)


def test_toy_net_neg_psnr_gradcheck():
    from cgnet.restoration import neg_psnr_loss

    rng = np.random.default_rng(0)
    x = Tensor(rng.random((1, 3, 8, 8)))
    target = rng.random((1, 3, 8, 8))
    w1 = rng.standard_normal((4, 3, 3, 3)) * 0.3
    w2 = rng.standard_normal((3, 4, 1, 1)) * 0.3

    def loss(w1t, w2t):
        h = F.gelu(F.conv2d(x, F.Conv2dParams("standard", 3, 4, 3, 1, 1, w1t, None)))
        y = F.conv2d(h, F.Conv2dParams("pointwise", 4, 3, 1, 1, 0, w2t, None))
        return neg_psnr_loss(x + y, target)

    t1, t2 = Tensor(w1, requires_grad=True), Tensor(w2, requires_grad=True)
    loss(t1, t2).backward()
    assert max_rel_error(t1.grad, finite_diff_grad(lambda t: loss(t, Tensor(w2)), w1)) < 1e-4
    assert max_rel_error(t2.grad, finite_diff_grad(lambda t: loss(Tensor(w1), t), w2)) < 1e-4


@settings(max_examples=30, deadline=None)
@given(hnp.arrays(np.float64, hnp.array_shapes(max_dims=3, max_side=4),
                  elements=st.floats(-10, 10)))
def test_add_mul_grads_property(a):
    x = Tensor(a, requires_grad=True)
    (x * 3.0 + x * x).sum().backward()
    np.testing.assert_allclose(x.grad, 3.0 + 2 * a)
