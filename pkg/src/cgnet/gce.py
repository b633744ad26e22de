"""Channel merging and the Global Context Extractor.

The extractor is a cascade of stride-equals-kernel convolutions: layer l
with kernel k_l and stride k_l summarizes non-overlapping k_l x k_l patches
of the previous layer, so the l-th output cell sees a block of side
k_1 * ... * k_l of the input.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from . import functional as F
from .nn import Conv2d, Module, ModuleList
from .tensor import Tensor, _make

LayerStyle = Literal["dw_then_pw", "pw_then_dw", "standard"]
Similarity = Literal["channel_cosine", "kernel_cosine", "kernel_mae"]

LAYER_STYLES = ("dw_then_pw", "pw_then_dw", "standard")
SIMILARITIES = ("channel_cosine", "kernel_cosine", "kernel_mae")
MERGE_KINDS = ("static", "dynamic", "none")


@dataclass(frozen=True)
class MergeStrategy:
    kind: str = "static"
    similarity: str | None = None

    def __post_init__(self):
        if self.kind not in MERGE_KINDS:
            raise ValueError(f"merge kind must be one of {MERGE_KINDS}, got {self.kind!r}")
        if self.kind == "dynamic":
            if self.similarity not in SIMILARITIES:
                raise ValueError(f"dynamic merge needs a similarity in {SIMILARITIES}")
        elif self.similarity is not None:
            object.__setattr__(self, "similarity", None)


@dataclass(frozen=True)
class GceConfig:
    kernels: tuple[int, ...] = (3, 3, 5)
    channels: int = 0
    layer_style: str = "dw_then_pw"
    merge: MergeStrategy = field(default_factory=MergeStrategy)

    def __post_init__(self):
        object.__setattr__(self, "kernels", tuple(int(k) for k in self.kernels))
        if not 1 <= len(self.kernels) <= 3:
            raise ValueError("GCE takes between one and three kernel sizes")
        if any(k < 1 for k in self.kernels):
            raise ValueError(f"kernel sizes must be >= 1, got {self.kernels}")
        if self.layer_style not in LAYER_STYLES:
            raise ValueError(f"layer_style must be one of {LAYER_STYLES}")


@dataclass
class GceContexts:
    local: Tensor
    middle: Tensor | None = None
    global_: Tensor | None = None

    def present(self) -> list[Tensor]:
        return [t for t in (self.local, self.middle, self.global_) if t is not None]

    def __len__(self) -> int:
        return len(self.present())


NAMES = ("local", "middle", "global")


def gce_layer_size(n_in: int, k: int) -> int:
    """Output extent of a stride-k, kernel-k, unpadded layer."""
    return n_in // k


def context_extents(h: int, w: int, kernels) -> list[tuple[int, int]]:
    """Spatial extents of the contexts that survive the layer-drop rule."""
    out = []
    for k in kernels:
        h, w = gce_layer_size(h, k), gce_layer_size(w, k)
        if h == 0 or w == 0:
            break
        out.append((h, w))
    return out


# ------------------------------------------------------------------ merging
def pair_sum(x: Tensor, pairs: np.ndarray) -> Tensor:
    """out[n, j] = x[n, pairs[n, j, 0]] + x[n, pairs[n, j, 1]].

    ``pairs`` has shape (n, C/2, 2) or (C/2, 2) and must partition the channels.
    """
    n, c, h, w = x.shape
    pairs = np.asarray(pairs, dtype=np.intp)
    if pairs.ndim == 2:
        pairs = np.broadcast_to(pairs, (n,) + pairs.shape)
    a_idx = pairs[:, :, 0][:, :, None, None]
    b_idx = pairs[:, :, 1][:, :, None, None]
    out = np.take_along_axis(x.data, a_idx, axis=1) + np.take_along_axis(x.data, b_idx, axis=1)

    def backward(g):
        gx = np.zeros_like(x.data)
        np.put_along_axis(gx, np.broadcast_to(a_idx, g.shape), g, axis=1)
        np.put_along_axis(gx, np.broadcast_to(b_idx, g.shape), g, axis=1)
        return (gx,)

    return _make(out, (x,), backward, "pair_sum")


def static_merge(x: Tensor) -> Tensor:
    c = x.shape[1]
    if c % 2:
        raise ValueError(f"static_merge needs an even channel count, got {c}")
    return x[:, 0::2] + x[:, 1::2]


def _cosine_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = a.astype(np.float64)
    b = b.astype(np.float64)
    dots = a @ b.T
    norms = np.outer(np.linalg.norm(a, axis=1), np.linalg.norm(b, axis=1))
    return dots / np.maximum(norms, 1e-12)


def similarity_scores(vectors: np.ndarray, similarity: str) -> np.ndarray:
    """Score matrix between even-indexed rows (A) and odd-indexed rows (B)."""
    a, b = vectors[0::2], vectors[1::2]
    if similarity in ("channel_cosine", "kernel_cosine"):
        return _cosine_matrix(a, b)
    if similarity == "kernel_mae":
        diff = np.abs(a.astype(np.float64)[:, None, :] - b.astype(np.float64)[None, :, :])
        return -diff.mean(axis=-1)
    raise ValueError(f"unknown similarity {similarity!r}")


def greedy_pairs(scores: np.ndarray) -> np.ndarray:
    """Greedy bipartite matching on an |A| x |B| score matrix.

    Highest score first; ties go to the lowest A index, then lowest B index.
    Returns (|A|, 2) channel indices (2a, 2b+1), ordered by A.
    """
    na, nb = scores.shape
    a_idx, b_idx = np.divmod(np.arange(na * nb), nb)
    order = np.lexsort((b_idx, a_idx, -scores.reshape(-1)))
    used_a = np.zeros(na, bool)
    used_b = np.zeros(nb, bool)
    match = np.full(na, -1)
    for flat in order:
        ia, ib = divmod(int(flat), nb)
        if used_a[ia] or used_b[ib]:
            continue
        used_a[ia] = used_b[ib] = True
        match[ia] = ib
        if used_a.all():
            break
    return np.stack([2 * np.arange(na), 2 * match + 1], axis=1)


def dynamic_merge(x: Tensor, strategy: MergeStrategy, aux_kernels: np.ndarray | None = None) -> Tensor:
    """Halve channels by summing similarity-matched (even, odd) channel pairs."""
    n, c = x.shape[:2]
    if c % 2:
        raise ValueError(f"dynamic_merge needs an even channel count, got {c}")
    sim = strategy.similarity
    if sim == "channel_cosine":
        flat = x.data.reshape(n, c, -1)
        pairs = np.stack([greedy_pairs(similarity_scores(flat[i], sim)) for i in range(n)])
    elif sim in ("kernel_cosine", "kernel_mae"):
        if aux_kernels is None:
            raise ValueError(f"similarity {sim!r} needs per-channel kernel weights")
        kern = np.asarray(aux_kernels)
        if kern.shape[0] != c:
            raise ValueError(f"aux_kernels must have one row per channel ({c}), got {kern.shape[0]}")
        kern = kern.reshape(c, -1)
        pairs = greedy_pairs(similarity_scores(kern, sim))
    else:
        raise ValueError(f"dynamic_merge needs a similarity, got {sim!r}")
    return pair_sum(x, pairs)


def merge_channels(x: Tensor, strategy: MergeStrategy, aux_kernels=None) -> Tensor:
    if strategy.kind == "static":
        return static_merge(x)
    if strategy.kind == "dynamic":
        return dynamic_merge(x, strategy, aux_kernels)
    return x


# ---------------------------------------------------------------- extractor
class GceLayer(Module):
    def __init__(self, c: int, k: int, style: str, rng: np.random.Generator):
        super().__init__()
        self.k, self.style = k, style
        if style == "dw_then_pw":
            self.dw = Conv2d("depthwise", c, c, k, k, 0, rng=rng)
            self.pw = Conv2d("pointwise", c, c, rng=rng)
        elif style == "pw_then_dw":
            self.pw = Conv2d("pointwise", c, c, rng=rng)
            self.dw = Conv2d("depthwise", c, c, k, k, 0, rng=rng)
        else:
            self.conv = Conv2d("standard", c, c, k, k, 0, rng=rng)

    def forward(self, x: Tensor) -> Tensor:
        if self.style == "dw_then_pw":
            y = self.pw(self.dw(x))
        elif self.style == "pw_then_dw":
            y = self.dw(self.pw(x))
        else:
            y = self.conv(x)
        return F.gelu(y)


class GCE(Module):
    def __init__(self, cfg: GceConfig, rng: np.random.Generator):
        super().__init__()
        if cfg.channels < 1:
            raise ValueError("GCE needs at least one channel")
        self.cfg = cfg
        self.layers = ModuleList(GceLayer(cfg.channels, k, cfg.layer_style, rng) for k in cfg.kernels)

    def forward(self, x: Tensor) -> GceContexts:
        return gce_forward(x, self)


def gce_forward(x: Tensor, gce: GCE) -> GceContexts:
    c, h, w = x.shape[1:]
    if c != gce.cfg.channels:
        raise ValueError(f"GCE expects {gce.cfg.channels} channels, got {c}")
    k1 = gce.cfg.kernels[0]
    if gce_layer_size(h, k1) == 0 or gce_layer_size(w, k1) == 0:
        raise ValueError(f"GCE input {h}x{w} is smaller than the first kernel ({k1})")
    outs = []
    y = x
    for layer in gce.layers:
        if gce_layer_size(y.shape[2], layer.k) == 0 or gce_layer_size(y.shape[3], layer.k) == 0:
            break
        y = layer(y)
        outs.append(y)
    outs += [None] * (3 - len(outs))
    return GceContexts(outs[0], outs[1], outs[2])
