import math

import numpy as np
import pytest

import oracles
from cgnet.blocks import CGBlock, NAFBlock, RangeFuser, RangeFuserParams, range_fuser
from cgnet.gce import GceContexts, MergeStrategy
from cgnet.gradcheck import randomize
from cgnet.tensor import Tensor

_erf = np.vectorize(math.erf)


def gelu(x):
    return 0.5 * x * (1 + _erf(x / math.sqrt(2)))


def arr(t):
    return None if t is None else np.asarray(t.data, dtype=np.float64)


def conv_ref(conv, x):
    w, b = arr(conv.weight), arr(conv.bias)
    if conv.kind == "pointwise":
        return oracles.pointwise_ref(x, w, b)
    groups = x.shape[1] if conv.kind == "depthwise" else 1
    return oracles.conv2d_loops(x, w, b, conv.s, conv.p, groups)


def fuser_ref(contexts, hw, sw, sb, rw, rb):
    up = [oracles.nearest_loops(c, *hw) for c in contexts]
    return oracles.pointwise_ref(oracles.sca_ref(np.concatenate(up, 1), sw, sb), rw, rb)


def cg_ref(block, x):
    """The CG block rebuilt from numpy pieces; static merge, dw_then_pw layers."""
    y = oracles.layer_norm_ref(x, arr(block.norm1.weight), arr(block.norm1.bias))
    y = gelu(conv_ref(block.expand, y))
    y = oracles.static_merge_loops(y)
    contexts = []
    for layer in block.gce.layers:
        if y.shape[2] // layer.k == 0:
            break
        y = gelu(conv_ref(layer.pw, conv_ref(layer.dw, y)))
        contexts.append(y)
    m = len(contexts) * contexts[0].shape[1]
    f = block.fuser
    z = fuser_ref(contexts, x.shape[2:], arr(f.sca.conv.weight)[:m, :m], arr(f.sca.conv.bias)[:m],
                  arr(f.reduce.weight)[:, :m], arr(f.reduce.bias))
    x1 = x + arr(block.beta) * z
    w = oracles.layer_norm_ref(x1, arr(block.norm2.weight), arr(block.norm2.bias))
    w = conv_ref(block.ffn1, w)
    c = w.shape[1] // 2
    w = conv_ref(block.ffn2, w[:, :c] * w[:, c:])
    return x1 + arr(block.gamma) * w


def naf_ref(block, x):
    y = oracles.layer_norm_ref(x, arr(block.norm1.weight), arr(block.norm1.bias))
    y = conv_ref(block.dw, conv_ref(block.pw1, y))
    c = y.shape[1] // 2
    y = oracles.sca_ref(y[:, :c] * y[:, c:], arr(block.sca.conv.weight), arr(block.sca.conv.bias))
    x1 = x + arr(block.beta) * conv_ref(block.pw2, y)
    w = conv_ref(block.ffn1, oracles.layer_norm_ref(x1, arr(block.norm2.weight), arr(block.norm2.bias)))
    return x1 + arr(block.gamma) * conv_ref(block.ffn2, w[:, :c] * w[:, c:])


# ------------------------------------------------------------- range fuser
def test_fuser_pass_through():
    local = np.random.default_rng(0).standard_normal((1, 3, 2, 2))
    p = RangeFuserParams(Tensor(np.zeros((3, 3, 1, 1))), Tensor(np.ones(3)),
                         Tensor(np.eye(3)[:, :, None, None]), Tensor(np.zeros(3)))
    out = range_fuser(GceContexts(Tensor(local)), (6, 6), p).data
    np.testing.assert_array_equal(out, oracles.nearest_loops(local, 6, 6))


def test_fuser_zero_contexts_give_bias():
    rng = np.random.default_rng(1)
    zeros = [Tensor(np.zeros((1, 2, s, s))) for s in (15, 5, 1)]
    rb = rng.standard_normal(4)
    p = RangeFuserParams(Tensor(rng.standard_normal((6, 6, 1, 1))), Tensor(rng.standard_normal(6)),
                         Tensor(rng.standard_normal((4, 6, 1, 1))), Tensor(rb))
    out = range_fuser(GceContexts(*zeros), (45, 45), p).data
    np.testing.assert_array_equal(out, np.broadcast_to(rb.reshape(1, 4, 1, 1), (1, 4, 45, 45)))


def test_fuser_matches_hand_composition():
    rng = np.random.default_rng(2)
    ctx = [rng.standard_normal((1, 2, s, s)) for s in (15, 5, 1)]
    sw, sb = rng.standard_normal((6, 6, 1, 1)), rng.standard_normal(6)
    rw, rb = rng.standard_normal((3, 6, 1, 1)), rng.standard_normal(3)
    out = range_fuser(GceContexts(*map(Tensor, ctx)), (45, 45),
                      RangeFuserParams(Tensor(sw), Tensor(sb), Tensor(rw), Tensor(rb))).data
    np.testing.assert_allclose(out, fuser_ref(ctx, (45, 45), sw, sb, rw, rb), atol=1e-6)


def test_fuser_rejects_channel_mismatch():
    p = RangeFuserParams(Tensor(np.zeros((4, 4, 1, 1))), None, Tensor(np.zeros((2, 4, 1, 1))), None)
    with pytest.raises(ValueError):
        range_fuser(GceContexts(Tensor(np.zeros((1, 2, 2, 2)))), (4, 4), p)


def test_fuser_module_uses_leading_blocks():
    f = RangeFuser(2, 3, 4, np.random.default_rng(0))
    p = f.params_for(1)
    assert p.sca_weight.shape == (2, 2, 1, 1) and p.reduce_weight.shape == (4, 2, 1, 1)
    with pytest.raises(ValueError):
        f.params_for(4)


# ------------------------------------------------------------------ blocks
def test_cg_identity_at_init():
    block = CGBlock(4, (3, 3), rng=np.random.default_rng(0))
    x = np.random.default_rng(1).standard_normal((2, 4, 9, 9)).astype(np.float32)
    np.testing.assert_array_equal(block(Tensor(x)).data, x)


def test_cg_zero_input_zero_biases():
    rng = np.random.default_rng(3)
    block = randomize(CGBlock(4, (3, 3), rng=rng), rng).to(np.float64)
    for name, p in block.named_parameters():
        if name.endswith("bias"):
            p.data = np.zeros_like(p.data)
    assert np.all(block(Tensor(np.zeros((1, 4, 9, 9)))).data == 0)


@pytest.mark.parametrize("kernels,hw", [((3, 3), 9), ((3, 3, 5), 45), ((3, 3, 5), 8)])
def test_cg_matches_composition(kernels, hw):
    rng = np.random.default_rng(hw)
    block = randomize(CGBlock(4, kernels, rng=rng), rng).to(np.float64)
    x = rng.standard_normal((1, 4, hw, hw))
    np.testing.assert_allclose(block(Tensor(x)).data, cg_ref(block, x), atol=1e-6)


def test_naf_identity_and_zero_weights():
    block = NAFBlock(4, np.random.default_rng(0))
    x = np.random.default_rng(1).standard_normal((1, 4, 6, 6)).astype(np.float32)
    np.testing.assert_array_equal(block(Tensor(x)).data, x)
    rng = np.random.default_rng(2)
    block = randomize(NAFBlock(4, rng), rng)
    for _, p in block.named_parameters():
        p.data = np.zeros_like(p.data)
    block.norm1.weight.data[:] = 1.0
    block.norm2.weight.data[:] = 1.0
    c = np.full((1, 4, 5, 5), 0.3, dtype=np.float32)
    np.testing.assert_array_equal(block(Tensor(c)).data, c)


def test_naf_matches_composition():
    rng = np.random.default_rng(5)
    block = randomize(NAFBlock(4, rng), rng).to(np.float64)
    x = rng.standard_normal((1, 4, 8, 8))
    np.testing.assert_allclose(block(Tensor(x)).data, naf_ref(block, x), atol=1e-6)


@pytest.mark.parametrize("merge,expand,gce_c", [(MergeStrategy("static"), 2, 4), (MergeStrategy("none"), 2, 8),
                                                (MergeStrategy("none"), 1, 4),
                                                (MergeStrategy("dynamic", "kernel_mae"), 2, 4)])
def test_cg_expansion_widths(merge, expand, gce_c):
    block = CGBlock(4, (3, 3), merge=merge, expand=expand, rng=np.random.default_rng(0))
    assert block.gce.cfg.channels == gce_c
    assert block(Tensor(np.ones((1, 4, 9, 9)))).shape == (1, 4, 9, 9)


def test_record_flag_keeps_contexts():
    block = CGBlock(4, (3, 3, 5), rng=np.random.default_rng(0))
    block.record = True
    block(Tensor(np.ones((1, 4, 45, 45))))
    assert [t.shape[2] for t in block.last_contexts.present()] == [15, 5, 1]
