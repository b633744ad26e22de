"""Finite-difference gradient checks for every primitive and both block types.

Each check draws float64 inputs and parameters from a seed, reduces the op's
output against a fixed random cotangent, and compares ``backward()`` with
central differences on a sample of elements of every input.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import functional as F
from .blocks import CGBlock, NAFBlock, RangeFuserParams, range_fuser
from .gce import GCE, GceConfig, MergeStrategy, dynamic_merge, static_merge
from .nn import Module
from .tensor import Tensor, finite_diff_grad, max_rel_error

TOLERANCE = 1e-4


@dataclass
class CheckResult:
    name: str
    seed: int
    max_rel_err: float

    @property
    def passed(self) -> bool:
        return self.max_rel_err < TOLERANCE


def _sample_indices(shape, rng, limit):
    total = int(np.prod(shape))
    flat = np.arange(total) if total <= limit else rng.choice(total, size=limit, replace=False)
    return [np.unravel_index(int(i), shape) for i in np.sort(flat)]


def check_function(fn: Callable[..., Tensor], arrays: list[np.ndarray], seed: int = 0,
                   eps: float = 1e-6, limit: int = 48) -> float:
    """Max relative error between analytic and numeric grads of sum(fn(*xs) * r)."""
    rng = np.random.default_rng(seed + 7919)
    arrays = [np.asarray(a, dtype=np.float64) for a in arrays]
    with_grad = [Tensor(a, requires_grad=True) for a in arrays]
    out = fn(*with_grad)
    cot = rng.standard_normal(out.shape)
    (out * Tensor(cot)).sum().backward()

    worst = 0.0
    for k, arr in enumerate(arrays):
        def loss(t, k=k):
            args = [Tensor(a) for a in arrays]
            args[k] = t
            return (fn(*args) * Tensor(cot)).sum()

        idx = _sample_indices(arr.shape, rng, limit)
        numeric = finite_diff_grad(loss, arr, eps, idx)
        analytic = with_grad[k].grad if with_grad[k].grad is not None else np.zeros_like(arr)
        rows = tuple(np.array(i) for i in zip(*idx))
        worst = max(worst, max_rel_error(analytic[rows], numeric[rows]))
    return worst


def randomize(module: Module, rng: np.random.Generator, scale: float = 0.5) -> Module:
    """Replace every parameter (residual scales included) with random float64 values."""
    for _, p in module.named_parameters():
        p.data = rng.normal(0.0, scale, size=p.shape)
    return module


def check_module(module: Module, x: np.ndarray, seed: int = 0, eps: float = 1e-6,
                 limit: int = 32, forward=None) -> float:
    """Gradcheck w.r.t. the input and every parameter tensor of ``module``."""
    forward = forward or (lambda m, t: m(t))
    params = list(module.named_parameters())
    originals = [p.data for _, p in params]

    def fn(xt, *ps):
        return _with_params(module, params, ps, lambda: forward(module, xt))

    return check_function(fn, [x] + originals, seed, eps, limit)


def _with_params(module, params, replacements, call):
    """Temporarily swap parameter Tensors inside ``module`` for ``replacements``."""
    owners = []
    for (name, _), new in zip(params, replacements):
        *path, attr = name.split(".")
        owner = module
        for part in path:
            owner = owner._children[part]
        owners.append((owner, attr, owner._params[attr]))
        object.__setattr__(owner, attr, new)
        owner._params[attr] = new
    try:
        return call()
    finally:
        for owner, attr, old in owners:
            object.__setattr__(owner, attr, old)
            owner._params[attr] = old


# --------------------------------------------------------------- the suite
def _conv(kind, k, s, p):
    def check(seed):
        rng = np.random.default_rng(seed)
        cin = 3 if kind != "depthwise" else 4
        cout = 4
        wshape = F.expected_weight_shape(kind, cin, cout, k)
        x = rng.standard_normal((2, cin, 7, 6))
        w = rng.standard_normal(wshape)
        b = rng.standard_normal(cout)
        return check_function(
            lambda xt, wt, bt: F.conv2d(xt, F.Conv2dParams(kind, cin, cout, k, s, p, wt, bt)),
            [x, w, b], seed)
    return check


def _unary(op, shape=(2, 4, 5, 5)):
    def check(seed):
        rng = np.random.default_rng(seed)
        return check_function(op, [rng.standard_normal(shape)], seed)
    return check


def _layer_norm(seed):
    rng = np.random.default_rng(seed)
    return check_function(F.channel_layer_norm,
                          [rng.standard_normal((2, 4, 3, 3)), rng.standard_normal(4),
                           rng.standard_normal(4)], seed)


def _sca(seed):
    rng = np.random.default_rng(seed)
    return check_function(lambda x, w, b: F.sca(x, w, b),
                          [rng.standard_normal((2, 3, 4, 4)), rng.standard_normal((3, 3, 1, 1)),
                           rng.standard_normal(3)], seed)


def _concat(seed):
    rng = np.random.default_rng(seed)
    return check_function(lambda a, b: F.concat_channels([a, b]),
                          [rng.standard_normal((1, 2, 3, 3)), rng.standard_normal((1, 3, 3, 3))], seed)


def _dynamic(similarity):
    def check(seed):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal((2, 6, 4, 4))
        aux = rng.standard_normal((6, 9))
        return check_function(lambda t: dynamic_merge(t, MergeStrategy("dynamic", similarity), aux),
                              [x], seed)
    return check


def _gce(seed):
    rng = np.random.default_rng(seed)
    g = randomize(GCE(GceConfig((2, 2, 2), 3), rng), rng).to(np.float64)

    def fwd(m, t):
        ctx = m(t)
        return F.concat_channels([F.nearest_resize(c, 8, 8) for c in ctx.present()])

    return check_module(g, rng.standard_normal((1, 3, 8, 8)), seed, forward=fwd)


def _fuser(seed):
    rng = np.random.default_rng(seed)
    from .gce import GceContexts

    c = 2
    arrays = [rng.standard_normal((1, c, 4, 4)), rng.standard_normal((1, c, 2, 2)),
              rng.standard_normal((1, c, 1, 1)), rng.standard_normal((3 * c, 3 * c, 1, 1)),
              rng.standard_normal(3 * c), rng.standard_normal((c, 3 * c, 1, 1)), rng.standard_normal(c)]
    return check_function(
        lambda l, m, g, sw, sb, rw, rb: range_fuser(GceContexts(l, m, g), (8, 8),
                                                    RangeFuserParams(sw, sb, rw, rb)),
        arrays, seed)


def _cg_block(kernels, hw, **kw):
    def check(seed):
        rng = np.random.default_rng(seed)
        block = randomize(CGBlock(4, kernels, rng=rng, **kw), rng).to(np.float64)
        return check_module(block, rng.standard_normal((1, 4, hw, hw)), seed)
    return check


def _naf_block(seed):
    rng = np.random.default_rng(seed)
    block = randomize(NAFBlock(4, rng=rng), rng).to(np.float64)
    return check_module(block, rng.standard_normal((1, 4, 6, 6)), seed)


CHECKS: dict[str, Callable[[int], float]] = {
    "conv2d.standard": _conv("standard", 3, 1, 1),
    "conv2d.standard_strided": _conv("standard", 2, 2, 0),
    "conv2d.depthwise": _conv("depthwise", 3, 1, 1),
    "conv2d.depthwise_gce": _conv("depthwise", 3, 3, 0),
    "conv2d.pointwise": _conv("pointwise", 1, 1, 0),
    "gelu": _unary(F.gelu),
    "channel_layer_norm": _layer_norm,
    "simple_gate": _unary(F.simple_gate),
    "sca": _sca,
    "global_avg_pool": _unary(F.global_avg_pool),
    "nearest_resize.up": _unary(lambda x: F.nearest_resize(x, 8, 7), (1, 2, 3, 3)),
    "nearest_resize.down": _unary(lambda x: F.nearest_resize(x, 2, 3), (1, 2, 5, 7)),
    "pixel_shuffle": _unary(lambda x: F.pixel_shuffle(x, 2), (1, 8, 3, 3)),
    "pixel_unshuffle": _unary(lambda x: F.pixel_unshuffle(x, 2), (1, 2, 4, 6)),
    "concat_channels": _concat,
    "static_merge": _unary(static_merge, (2, 6, 3, 3)),
    "dynamic_merge.channel_cosine": _dynamic("channel_cosine"),
    "dynamic_merge.kernel_cosine": _dynamic("kernel_cosine"),
    "dynamic_merge.kernel_mae": _dynamic("kernel_mae"),
    "gce": _gce,
    "range_fuser": _fuser,
    "cg_block": _cg_block((3, 3), 9),
    "cg_block.three_contexts": _cg_block((2, 2, 2), 8),
    "naf_block": _naf_block,
}


def run_suite(seeds, names=None) -> list[CheckResult]:
    names = list(names) if names is not None else list(CHECKS)
    return [CheckResult(name, seed, CHECKS[name](seed)) for seed in seeds for name in names]
