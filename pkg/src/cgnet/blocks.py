"""Range Fuser, CG (cascaded context) block and NAF block."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import functional as F
from .gce import GCE, GceConfig, GceContexts, MergeStrategy, merge_channels
from .nn import Conv2d, LayerNorm2d, Module, SCA, param
from .tensor import Tensor


@dataclass
class RangeFuserParams:
    sca_weight: Tensor  # (mC, mC, 1, 1)
    sca_bias: Tensor | None
    reduce_weight: Tensor  # (C_out, mC, 1, 1)
    reduce_bias: Tensor | None


def range_fuser(ctxs: GceContexts, target_hw: tuple[int, int], p: RangeFuserParams) -> Tensor:
    """Upsample every present context to ``target_hw``, concatenate, re-weight
    channels with SCA and project back down with a pointwise conv."""
    present = ctxs.present()
    if not present:
        raise ValueError("range_fuser needs at least the local context")
    h, w = target_hw
    up = [F.nearest_resize(t, h, w) for t in present]
    cat = F.concat_channels(up) if len(up) > 1 else up[0]
    mc = cat.shape[1]
    if p.reduce_weight.shape[1] != mc:
        raise ValueError(f"reduce_pw expects {p.reduce_weight.shape[1]} input channels, "
                         f"got {mc} from {len(present)} contexts")
    y = F.sca(cat, p.sca_weight, p.sca_bias)
    cout = p.reduce_weight.shape[0]
    return F.conv2d(y, F.Conv2dParams("pointwise", mc, cout, 1, 1, 0, p.reduce_weight, p.reduce_bias))


class RangeFuser(Module):
    """Sized for the maximum number of contexts. When the layer-drop rule
    removes deeper contexts, only the leading weight blocks are used."""

    def __init__(self, ctx_channels: int, max_contexts: int, out_channels: int,
                 rng: np.random.Generator):
        super().__init__()
        self.ctx_channels = ctx_channels
        self.max_contexts = max_contexts
        self.sca = SCA(ctx_channels * max_contexts, rng=rng)
        self.reduce = Conv2d("pointwise", ctx_channels * max_contexts, out_channels, rng=rng)

    def params_for(self, m: int) -> RangeFuserParams:
        if not 1 <= m <= self.max_contexts:
            raise ValueError(f"range fuser built for up to {self.max_contexts} contexts, got {m}")
        mc = m * self.ctx_channels
        if m == self.max_contexts:
            return RangeFuserParams(self.sca.conv.weight, self.sca.conv.bias,
                                    self.reduce.weight, self.reduce.bias)
        return RangeFuserParams(self.sca.conv.weight[:mc, :mc], self.sca.conv.bias[:mc],
                                self.reduce.weight[:, :mc], self.reduce.bias)

    def forward(self, ctxs: GceContexts, target_hw: tuple[int, int]) -> Tensor:
        return range_fuser(ctxs, target_hw, self.params_for(len(ctxs)))


def _scale(c: int) -> Tensor:
    return param(np.zeros((1, c, 1, 1)))


class CGBlock(Module):
    def __init__(self, c: int, kernels=(3, 3, 5), layer_style: str = "dw_then_pw",
                 merge: MergeStrategy | None = None, expand: int = 2,
                 rng: np.random.Generator | None = None):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        merge = merge if merge is not None else MergeStrategy("static")
        self.c, self.expand_factor, self.merge = c, expand, merge
        wide = expand * c
        if merge.kind != "none" and wide % 2:
            raise ValueError(f"channel merging needs an even expanded width, got {wide}")
        gce_c = wide // 2 if merge.kind != "none" else wide
        self.gce_cfg = GceConfig(tuple(kernels), gce_c, layer_style, merge)

        self.norm1 = LayerNorm2d(c)
        self.expand = Conv2d("pointwise", c, wide, rng=rng)
        self.gce = GCE(self.gce_cfg, rng)
        self.fuser = RangeFuser(gce_c, len(self.gce_cfg.kernels), c, rng)
        self.norm2 = LayerNorm2d(c)
        self.ffn1 = Conv2d("pointwise", c, 2 * c, rng=rng)
        self.ffn2 = Conv2d("pointwise", c, c, rng=rng)
        self.beta = _scale(c)
        self.gamma = _scale(c)
        self.record = False
        self.last_contexts: GceContexts | None = None

    def mixer(self, x: Tensor) -> Tensor:
        h, w = x.shape[2:]
        y = F.gelu(self.expand(self.norm1(x)))
        # kernel similarities score each expanded channel by the expand weights that produce it
        aux = self.expand.weight.data.reshape(self.expand.cout, -1)
        y = merge_channels(y, self.merge, aux)
        ctxs = self.gce(y)
        if self.record:
            self.last_contexts = ctxs
        return self.fuser(ctxs, (h, w))

    def forward(self, x: Tensor) -> Tensor:
        x1 = x + self.beta * self.mixer(x)
        w = self.ffn2(F.simple_gate(self.ffn1(self.norm2(x1))))
        return x1 + self.gamma * w


class NAFBlock(Module):
    def __init__(self, c: int, rng: np.random.Generator | None = None):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.c = c
        self.norm1 = LayerNorm2d(c)
        self.pw1 = Conv2d("pointwise", c, 2 * c, rng=rng)
        self.dw = Conv2d("depthwise", 2 * c, 2 * c, 3, 1, 1, rng=rng)
        self.sca = SCA(c, rng=rng)
        self.pw2 = Conv2d("pointwise", c, c, rng=rng)
        self.norm2 = LayerNorm2d(c)
        self.ffn1 = Conv2d("pointwise", c, 2 * c, rng=rng)
        self.ffn2 = Conv2d("pointwise", c, c, rng=rng)
        self.beta = _scale(c)
        self.gamma = _scale(c)

    def mixer(self, x: Tensor) -> Tensor:
        y = F.simple_gate(self.dw(self.pw1(self.norm1(x))))
        return self.pw2(self.sca(y))

    def forward(self, x: Tensor) -> Tensor:
        if x.shape[1] != self.c:
            raise ValueError(f"NAF block expects {self.c} channels, got {x.shape[1]}")
        x1 = x + self.beta * self.mixer(x)
        w = self.ffn2(F.simple_gate(self.ffn1(self.norm2(x1))))
        return x1 + self.gamma * w
