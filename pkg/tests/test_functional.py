import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from cgnet import functional as F
from cgnet.tensor import Tensor


def conv(x, kind, cin, cout, k, s, p, w, b=None):
    return F.conv2d(Tensor(x), F.Conv2dParams(kind, cin, cout, k, s, p, Tensor(w),
                                             None if b is None else Tensor(b))).data


# ----------------------------------------------------------------- conv2d
def test_depthwise_sum_of_ones():
    out = conv(np.ones((1, 1, 2, 2)), "depthwise", 1, 1, 2, 2, 0, np.ones((1, 1, 2, 2)), np.zeros(1))
    assert out.shape == (1, 1, 1, 1) and out.item() == 4.0


def test_pointwise_identity():
    x = np.random.default_rng(0).standard_normal((2, 5, 3, 4))
    np.testing.assert_array_equal(conv(x, "pointwise", 5, 5, 1, 1, 0, np.eye(5)[:, :, None, None]), x)


@pytest.mark.parametrize("seed", range(3))
def test_standard_matches_loop_oracle(seed):
    rng = np.random.default_rng(seed)
    x, w, b = rng.standard_normal((1, 3, 5, 5)), rng.standard_normal((4, 3, 3, 3)), rng.standard_normal(4)
    ref = oracles.conv2d_loops(x, w, b, 1, 1)
    np.testing.assert_allclose(conv(x, "standard", 3, 4, 3, 1, 1, w, b), ref, atol=1e-6)


@pytest.mark.parametrize("k,s,p", [(3, 1, 1), (3, 3, 0), (5, 5, 0), (2, 2, 0)])
def test_depthwise_matches_grouped_oracle(k, s, p):
    rng = np.random.default_rng(k * 10 + s)
    x, w, b = rng.standard_normal((2, 3, 11, 10)), rng.standard_normal((3, 1, k, k)), rng.standard_normal(3)
    ref = oracles.conv2d_loops(x, w, b, s, p, groups=3)
    np.testing.assert_allclose(conv(x, "depthwise", 3, 3, k, s, p, w, b), ref, atol=1e-9)


def test_strided_standard_matches_oracle():
    rng = np.random.default_rng(4)
    x, w = rng.standard_normal((1, 2, 6, 7)), rng.standard_normal((3, 2, 2, 2))
    np.testing.assert_allclose(conv(x, "standard", 2, 3, 2, 2, 0, w), oracles.conv2d_loops(x, w, None, 2, 0),
                               atol=1e-9)


def test_conv_output_size_and_errors():
    assert F.conv_out_size(45, 3, 3, 0) == 15
    assert F.conv_out_size(2, 5, 5, 0) == 0
    with pytest.raises(ValueError):
        F.Conv2dParams("standard", 3, 4, 3, 1, 1, Tensor(np.zeros((4, 2, 3, 3))))
    with pytest.raises(ValueError):
        F.conv2d(Tensor(np.zeros((1, 2, 4, 4))),
                 F.Conv2dParams("pointwise", 3, 4, 1, 1, 0, Tensor(np.zeros((4, 3, 1, 1)))))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(-3, 3), st.floats(-3, 3))
def test_conv_is_linear_in_input(seed, a, b):
    rng = np.random.default_rng(seed)
    x, y, w = rng.standard_normal((1, 2, 5, 5)), rng.standard_normal((1, 2, 5, 5)), rng.standard_normal((3, 2, 3, 3))
    lhs = conv(a * x + b * y, "standard", 2, 3, 3, 1, 1, w)
    rhs = a * conv(x, "standard", 2, 3, 3, 1, 1, w) + b * conv(y, "standard", 2, 3, 3, 1, 1, w)
    np.testing.assert_allclose(lhs, rhs, atol=1e-9)


def test_mac_counter_matches_formula():
    assert F.conv_macs("pointwise", 3, 4, 1, 2, 2) == 48
    assert F.conv_macs("depthwise", 8, 8, 3, 4, 4) == 1152
    with F.count_macs_runtime() as count:
        conv(np.zeros((1, 3, 2, 2)), "pointwise", 3, 4, 1, 1, 0, np.zeros((4, 3, 1, 1)))
    assert count[0] == 48


# ------------------------------------------------------------ activations
def test_gelu_values():
    g = F.gelu(Tensor(np.array([0.0, 1.0, 10.0, -1.0]))).data
    assert g[0] == 0.0
    assert abs(g[1] - 0.5 * (1 + math.erf(1 / math.sqrt(2)))) < 1e-12
    assert abs(g[1] - 0.8413) < 1e-4
    assert 9.999 <= g[2] <= 10.0
    assert abs(g[3] - oracles.gelu_scalar(-1.0)) < 1e-12


def test_layer_norm_cases():
    ones, zeros = Tensor(np.ones(4)), Tensor(np.zeros(4))
    const = Tensor(np.full((1, 4, 2, 2), 3.0))
    assert np.all(F.channel_layer_norm(const, ones, zeros).data == 0)
    fives = F.channel_layer_norm(Tensor(np.random.default_rng(0).standard_normal((1, 4, 2, 2))),
                                 zeros, Tensor(np.full(4, 5.0))).data
    assert np.all(fives == 5.0)
    y = F.channel_layer_norm(Tensor(np.random.default_rng(1).standard_normal((1, 4, 2, 2))), ones, zeros).data
    assert np.abs(y.mean(axis=1)).max() <= 1e-6
    assert np.abs(y.var(axis=1) - 1).max() <= 1e-4


def test_layer_norm_matches_reference():
    rng = np.random.default_rng(2)
    x, g, b = rng.standard_normal((2, 5, 3, 3)), rng.standard_normal(5), rng.standard_normal(5)
    np.testing.assert_allclose(F.channel_layer_norm(Tensor(x), Tensor(g), Tensor(b)).data,
                               oracles.layer_norm_ref(x, g, b), atol=1e-12)


def test_simple_gate():
    x = np.random.default_rng(0).standard_normal((1, 2, 3, 3))
    np.testing.assert_array_equal(F.simple_gate(Tensor(np.concatenate([x, np.ones_like(x)], 1))).data, x)
    assert np.all(F.simple_gate(Tensor(np.concatenate([x, np.zeros_like(x)], 1))).data == 0)
    y = np.random.default_rng(1).standard_normal((2, 6, 2, 2))
    np.testing.assert_array_equal(F.simple_gate(Tensor(y)).data, y[:, :3] * y[:, 3:])
    with pytest.raises(ValueError):
        F.simple_gate(Tensor(np.zeros((1, 3, 2, 2))))


def test_sca_cases():
    c, w, b = 0.7, 1.5, -0.2
    out = F.sca(Tensor(np.full((1, 1, 3, 3), c)), Tensor(np.full((1, 1, 1, 1), w)), Tensor([b])).data
    np.testing.assert_allclose(out, c * (w * c + b))
    x = np.random.default_rng(0).standard_normal((2, 3, 4, 4))
    out = F.sca(Tensor(x), Tensor(np.zeros((3, 3, 1, 1))), Tensor(np.ones(3))).data
    np.testing.assert_array_equal(out, x)
    rng = np.random.default_rng(1)
    w3, b3 = rng.standard_normal((3, 3, 1, 1)), rng.standard_normal(3)
    np.testing.assert_allclose(F.sca(Tensor(x), Tensor(w3), Tensor(b3)).data,
                               oracles.sca_ref(x, w3, b3), atol=1e-6)


def test_pool_and_concat():
    assert F.global_avg_pool(Tensor(np.array([[[[1.0, 3.0], [5.0, 7.0]]]]))).data.item() == 4.0
    assert np.all(F.global_avg_pool(Tensor(np.full((1, 2, 3, 3), 2.5))).data == 2.5)
    a, b = np.zeros((1, 2, 2, 2)), np.ones((1, 3, 2, 2))
    cat = F.concat_channels([Tensor(a), Tensor(b)]).data
    assert cat.shape == (1, 5, 2, 2) and np.all(cat[:, :2] == 0) and np.all(cat[:, 2:] == 1)


# -------------------------------------------------------- resize / shuffle
def test_nearest_replication():
    x = np.array([[[[1.0, 2.0], [3.0, 4.0]]]])
    out = F.nearest_resize(Tensor(x), 4, 4).data[0, 0]
    np.testing.assert_array_equal(out, np.kron([[1, 2], [3, 4]], np.ones((2, 2))))
    np.testing.assert_array_equal(F.nearest_resize(Tensor(x), 2, 2).data, x)


@pytest.mark.parametrize("src,dst", [((3, 3), (8, 8)), ((5, 7), (2, 3)), ((1, 1), (45, 45)), ((15, 5), (45, 45))])
def test_nearest_matches_floor_oracle(src, dst):
    x = np.random.default_rng(0).standard_normal((1, 2) + src)
    np.testing.assert_array_equal(F.nearest_resize(Tensor(x), *dst).data, oracles.nearest_loops(x, *dst))


def test_pixel_shuffle_small_case():
    out = F.pixel_shuffle(Tensor(np.array([1.0, 2.0, 3.0, 4.0]).reshape(1, 4, 1, 1)), 2).data
    np.testing.assert_array_equal(out[0, 0], [[1, 2], [3, 4]])


def test_pixel_shuffle_index_law():
    x = np.random.default_rng(0).standard_normal((1, 8, 3, 3))
    np.testing.assert_array_equal(F.pixel_shuffle(Tensor(x), 2).data, oracles.pixel_shuffle_loops(x, 2))


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 3), st.integers(1, 3), st.integers(1, 4), st.integers(1, 3), st.integers(0, 999))
def test_shuffle_unshuffle_inverse(r, c, h, w, seed):
    x = np.random.default_rng(seed).standard_normal((1, c * r * r, h, w))
    np.testing.assert_array_equal(F.pixel_unshuffle(F.pixel_shuffle(Tensor(x), r), r).data, x)
    y = np.random.default_rng(seed).standard_normal((1, c, h * r, w * r))
    np.testing.assert_array_equal(F.pixel_shuffle(F.pixel_unshuffle(Tensor(y), r), r).data, y)
