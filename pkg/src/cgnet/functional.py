"""Differentiable NCHW layer primitives.

Convolution is cross-correlation (no kernel flip). Every conv call reports
its multiply-accumulate count to the active ``count_macs_runtime`` context,
which lets tests cross-check the analytic profiler against a real forward.
"""

from __future__ import annotations

import contextlib
import math
from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np
from scipy.special import erf

from .tensor import Tensor, _make, concat, mean

ConvKind = Literal["standard", "depthwise", "pointwise"]

_mac_counters: list[list[int]] = []


@contextlib.contextmanager
def count_macs_runtime():
    """Collect conv MACs executed inside the block; yields a one-element list."""
    counter = [0]
    _mac_counters.append(counter)
    try:
        yield counter
    finally:
        _mac_counters.remove(counter)


def _report_macs(n: int) -> None:
    for c in _mac_counters:
        c[0] += n


def conv_out_size(n_in: int, k: int, s: int = 1, p: int = 0) -> int:
    return (n_in + 2 * p - k) // s + 1


@dataclass
class Conv2dParams:
    kind: ConvKind
    in_channels: int
    out_channels: int
    kernel: int
    stride: int
    padding: int
    weight: Tensor
    bias: Tensor | None = None

    def __post_init__(self):
        if self.kind == "depthwise" and self.in_channels != self.out_channels:
            raise ValueError("depthwise conv needs in_channels == out_channels")
        if self.kind == "pointwise" and (self.kernel, self.stride, self.padding) != (1, 1, 0):
            raise ValueError("pointwise conv needs k = s = 1, p = 0")
        want = expected_weight_shape(self.kind, self.in_channels, self.out_channels, self.kernel)
        if tuple(self.weight.shape) != want:
            raise ValueError(f"weight shape {self.weight.shape} != expected {want}")
        if self.bias is not None and tuple(self.bias.shape) != (self.out_channels,):
            raise ValueError(f"bias shape {self.bias.shape} != ({self.out_channels},)")


def expected_weight_shape(kind: str, cin: int, cout: int, k: int) -> tuple[int, int, int, int]:
    if kind == "depthwise":
        return (cout, 1, k, k)
    return (cout, cin, k, k)


def conv2d(x: Tensor, p: Conv2dParams) -> Tensor:
    n, c, h, w = x.shape
    if c != p.in_channels:
        raise ValueError(f"conv2d expected {p.in_channels} input channels, got {c}")
    k, s, pad = p.kernel, p.stride, p.padding
    ho, wo = conv_out_size(h, k, s, pad), conv_out_size(w, k, s, pad)
    if ho <= 0 or wo <= 0:
        raise ValueError(f"conv2d output would be empty: input {h}x{w}, k={k}, s={s}, p={pad}")

    if p.kind == "pointwise":
        out = _pointwise(x, p.weight)
    elif p.kind == "depthwise":
        out = _depthwise(x, p.weight, s, pad, ho, wo)
    else:
        out = _standard(x, p.weight, s, pad, ho, wo)
    _report_macs(n * conv_macs(p.kind, p.in_channels, p.out_channels, k, ho, wo))
    if p.bias is not None:
        out = out + p.bias.reshape(1, -1, 1, 1)
    return out


def conv_macs(kind: str, cin: int, cout: int, k: int, ho: int, wo: int) -> int:
    if kind == "depthwise":
        return ho * wo * cout * k * k
    return ho * wo * cin * cout * k * k


def _pointwise(x: Tensor, weight: Tensor) -> Tensor:
    n, c, h, w = x.shape
    wmat = weight.data.reshape(weight.shape[0], c)
    xs = x.data.reshape(n, c, h * w)
    out = np.matmul(wmat, xs).reshape(n, -1, h, w)

    def backward(g):
        g2 = g.reshape(n, -1, h * w)
        gx = np.matmul(wmat.T, g2).reshape(x.shape) if x.requires_grad else None
        gw = None
        if weight.requires_grad:
            gw = np.einsum("nop,ncp->oc", g2, xs, optimize=True).reshape(weight.shape)
        return gx, gw

    return _make(out, (x, weight), backward, "conv_pw")


def _pad(a: np.ndarray, pad: int) -> np.ndarray:
    if pad == 0:
        return a
    return np.pad(a, ((0, 0), (0, 0), (pad, pad), (pad, pad)))


def _window(xp: np.ndarray, i: int, j: int, s: int, ho: int, wo: int) -> np.ndarray:
    return xp[:, :, i:i + s * (ho - 1) + 1:s, j:j + s * (wo - 1) + 1:s]


def _depthwise(x: Tensor, weight: Tensor, s: int, pad: int, ho: int, wo: int) -> Tensor:
    k = weight.shape[-1]
    xp = _pad(x.data, pad)
    wk = weight.data[:, 0]  # (C, k, k)
    out = np.zeros((x.shape[0], x.shape[1], ho, wo), dtype=np.result_type(x.dtype, weight.dtype))
    for i in range(k):
        for j in range(k):
            out += _window(xp, i, j, s, ho, wo) * wk[None, :, i, j, None, None]

    def backward(g):
        gx = gw = None
        if x.requires_grad:
            gxp = np.zeros_like(xp)
            for i in range(k):
                for j in range(k):
                    _window(gxp, i, j, s, ho, wo)[...] += g * wk[None, :, i, j, None, None]
            gx = gxp[:, :, pad:pad + x.shape[2], pad:pad + x.shape[3]] if pad else gxp
        if weight.requires_grad:
            gw = np.zeros_like(weight.data)
            for i in range(k):
                for j in range(k):
                    gw[:, 0, i, j] = np.einsum("nchw,nchw->c", g, _window(xp, i, j, s, ho, wo))
        return gx, gw

    return _make(out, (x, weight), backward, "conv_dw")


def _standard(x: Tensor, weight: Tensor, s: int, pad: int, ho: int, wo: int) -> Tensor:
    n, c = x.shape[:2]
    cout, k = weight.shape[0], weight.shape[-1]
    xp = _pad(x.data, pad)
    # im2col: (n, ho*wo, c*k*k) against (c*k*k, cout)
    cols = np.empty((n, c, k, k, ho, wo), dtype=xp.dtype)
    for i in range(k):
        for j in range(k):
            cols[:, :, i, j] = _window(xp, i, j, s, ho, wo)
    cols = cols.reshape(n, c * k * k, ho * wo)
    wmat = weight.data.reshape(cout, c * k * k)
    out = np.matmul(wmat, cols).reshape(n, cout, ho, wo)

    def backward(g):
        g2 = g.reshape(n, cout, ho * wo)
        gx = gw = None
        if weight.requires_grad:
            gw = np.einsum("nop,nqp->oq", g2, cols, optimize=True).reshape(weight.shape)
        if x.requires_grad:
            gcols = np.matmul(wmat.T, g2).reshape(n, c, k, k, ho, wo)
            gxp = np.zeros_like(xp)
            for i in range(k):
                for j in range(k):
                    _window(gxp, i, j, s, ho, wo)[...] += gcols[:, :, i, j]
            gx = gxp[:, :, pad:pad + x.shape[2], pad:pad + x.shape[3]] if pad else gxp
        return gx, gw

    return _make(out, (x, weight), backward, "conv")


def gelu(x: Tensor) -> Tensor:
    """Exact GELU, x * Phi(x), via the error function."""
    a = x.data
    cdf = 0.5 * (1.0 + erf(a / math.sqrt(2.0)))
    pdf = np.exp(-0.5 * a * a) / math.sqrt(2.0 * math.pi)
    return _make((a * cdf).astype(a.dtype), (x,), lambda g: (g * (cdf + a * pdf),), "gelu")


def channel_layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-6) -> Tensor:
    """Normalize the channel vector at every pixel, then scale and shift per channel."""
    c = x.shape[1]
    if c == 0:
        raise ValueError("channel_layer_norm needs at least one channel")
    a = x.data
    mu = a.mean(axis=1, keepdims=True)
    xc = a - mu
    var = (xc * xc).mean(axis=1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + eps)
    xhat = xc * rstd
    g4 = gamma.data.reshape(1, c, 1, 1)
    out = xhat * g4 + beta.data.reshape(1, c, 1, 1)

    def backward(g):
        gx = None
        if x.requires_grad:
            gh = g * g4
            gx = rstd * (gh - gh.mean(axis=1, keepdims=True)
                         - xhat * (gh * xhat).mean(axis=1, keepdims=True))
        ggamma = (g * xhat).sum(axis=(0, 2, 3)) if gamma.requires_grad else None
        gbeta = g.sum(axis=(0, 2, 3)) if beta.requires_grad else None
        return gx, ggamma, gbeta

    return _make(out, (x, gamma, beta), backward, "layer_norm")


def channel_split(x: Tensor, parts: int = 2) -> list[Tensor]:
    c = x.shape[1]
    if c % parts:
        raise ValueError(f"cannot split {c} channels into {parts} equal parts")
    step = c // parts
    return [x[:, i * step:(i + 1) * step] for i in range(parts)]


def simple_gate(x: Tensor) -> Tensor:
    if x.shape[1] % 2:
        raise ValueError(f"simple_gate needs an even channel count, got {x.shape[1]}")
    a, b = channel_split(x, 2)
    return a * b


def global_avg_pool(x: Tensor) -> Tensor:
    return mean(x, axis=(2, 3), keepdims=True)


def sca(x: Tensor, weight: Tensor, bias: Tensor | None) -> Tensor:
    """Simple channel attention: x * pointwise(global_avg_pool(x))."""
    c = x.shape[1]
    attn = conv2d(global_avg_pool(x), Conv2dParams("pointwise", c, c, 1, 1, 0, weight, bias))
    return x * attn


def concat_channels(xs: Sequence[Tensor]) -> Tensor:
    xs = list(xs)
    if not xs:
        raise ValueError("concat_channels needs at least one tensor")
    n, _, h, w = xs[0].shape
    for t in xs[1:]:
        if (t.shape[0], t.shape[2], t.shape[3]) != (n, h, w):
            raise ValueError(f"concat_channels spatial/batch mismatch: {xs[0].shape} vs {t.shape}")
    return concat(xs, axis=1)


def nearest_index(n_src: int, n_dst: int) -> np.ndarray:
    return (np.arange(n_dst) * n_src) // n_dst


def nearest_resize(x: Tensor, out_h: int, out_w: int) -> Tensor:
    """dst(i, j) = src(floor(i*h_src/h_dst), floor(j*w_src/w_dst)); no parameters."""
    n, c, h, w = x.shape
    if h == 0 or w == 0:
        raise ValueError("nearest_resize of an empty map")
    if out_h < 1 or out_w < 1:
        raise ValueError(f"nearest_resize target must be >= 1, got {out_h}x{out_w}")
    if (h, w) == (out_h, out_w):
        return x
    ri, ci = nearest_index(h, out_h), nearest_index(w, out_w)
    out = x.data[:, :, ri][:, :, :, ci]

    def backward(g):
        # scatter-add rows then columns
        gr = np.zeros((n, c, h, out_w), dtype=g.dtype)
        np.add.at(gr, (slice(None), slice(None), ri), g)
        gx = np.zeros((n, c, h, w), dtype=g.dtype)
        np.add.at(gx.transpose(3, 0, 1, 2), ci, gr.transpose(3, 0, 1, 2))
        return (gx,)

    return _make(np.ascontiguousarray(out), (x,), backward, "nearest_resize")


def pixel_shuffle(x: Tensor, r: int) -> Tensor:
    n, c, h, w = x.shape
    if c % (r * r):
        raise ValueError(f"pixel_shuffle needs channels divisible by {r * r}, got {c}")
    co = c // (r * r)
    out = x.data.reshape(n, co, r, r, h, w).transpose(0, 1, 4, 2, 5, 3).reshape(n, co, h * r, w * r)

    def backward(g):
        return (g.reshape(n, co, h, r, w, r).transpose(0, 1, 3, 5, 2, 4).reshape(x.shape),)

    return _make(np.ascontiguousarray(out), (x,), backward, "pixel_shuffle")


def pixel_unshuffle(x: Tensor, r: int) -> Tensor:
    n, c, h, w = x.shape
    if h % r or w % r:
        raise ValueError(f"pixel_unshuffle needs H, W divisible by {r}, got {h}x{w}")
    ho, wo = h // r, w // r
    out = x.data.reshape(n, c, ho, r, wo, r).transpose(0, 1, 3, 5, 2, 4).reshape(n, c * r * r, ho, wo)

    def backward(g):
        return (g.reshape(n, c, r, r, ho, wo).transpose(0, 1, 4, 2, 5, 3).reshape(x.shape),)

    return _make(np.ascontiguousarray(out), (x,), backward, "pixel_unshuffle")
