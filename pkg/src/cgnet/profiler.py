"""Analytic cost model, perturbation receptive-field probe, context-map export.

MAC convention: one multiply-accumulate is one MAC. Only convolutions are
counted (the SCA pointwise conv runs on the pooled 1x1 map). Activations,
normalisation, pooling, resizing, merging and residual additions are free.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .functional import conv_macs, conv_out_size, nearest_resize
from .gce import NAMES, context_extents
from .imageio import write_gray
from .network import STAGES, NetworkConfig
from .tensor import Tensor, no_grad


@dataclass
class CostRow:
    name: str
    macs: int
    params: int


@dataclass
class CostReport:
    rows: list[CostRow]
    height: int
    width: int

    @property
    def total_macs(self) -> int:
        return sum(r.macs for r in self.rows)

    @property
    def total_params(self) -> int:
        return sum(r.params for r in self.rows)

    def by_prefix(self, prefix: str) -> tuple[int, int]:
        rows = [r for r in self.rows if r.name == prefix or r.name.startswith(prefix + ".")]
        return sum(r.macs for r in rows), sum(r.params for r in rows)

    def render(self) -> str:
        w = max([len(r.name) for r in self.rows] + [5])
        lines = [f"{'layer':<{w}}  {'MACs':>16}  {'params':>12}"]
        lines += [f"{r.name:<{w}}  {r.macs:>16,d}  {r.params:>12,d}" for r in self.rows]
        lines.append(f"{'total':<{w}}  {self.total_macs:>16,d}  {self.total_params:>12,d}")
        lines.append(f"input {self.height}x{self.width}x3: {self.total_macs / 1e9:.3f} GMACs, "
                     f"{self.total_params / 1e6:.3f} M params")
        return "\n".join(lines)

    def to_csv(self) -> str:
        lines = ["name,macs,params"]
        lines += [f"{r.name},{r.macs},{r.params}" for r in self.rows]
        lines.append(f"total,{self.total_macs},{self.total_params}")
        return "\n".join(lines) + "\n"


class _Walker:
    """Mirrors the network builder layer by layer without allocating weights."""

    def __init__(self, cfg: NetworkConfig):
        self.cfg = cfg
        self.rows: list[CostRow] = []

    def conv(self, name, kind, cin, cout, k, s, p, h, w, bias=True):
        ho, wo = conv_out_size(h, k, s, p), conv_out_size(w, k, s, p)
        wparams = cout * k * k if kind == "depthwise" else cout * cin * k * k
        macs = conv_macs(kind, cin, cout, k, ho, wo) if ho > 0 and wo > 0 else 0
        self.rows.append(CostRow(name, macs, wparams + (cout if bias else 0)))
        return ho, wo

    def free(self, name, params):
        self.rows.append(CostRow(name, 0, params))

    def cg_block(self, p, c, h, w):
        cfg = self.cfg
        wide = cfg.expand * c
        gc = wide // 2 if cfg.merge.kind != "none" else wide
        self.free(p + "norm1", 2 * c)
        self.conv(p + "expand", "pointwise", c, wide, 1, 1, 0, h, w)
        live = len(context_extents(h, w, cfg.gce_kernels))
        hh, ww = h, w
        for i, k in enumerate(cfg.gce_kernels):
            lp = f"{p}gce.layers.{i}."
            # dropped layers keep their parameters but cost nothing
            run = i < live
            eh, ew = (hh, ww) if run else (0, 0)
            if cfg.gce_layer_style == "dw_then_pw":
                oh, ow = self.conv(lp + "dw", "depthwise", gc, gc, k, k, 0, eh, ew)
                self.conv(lp + "pw", "pointwise", gc, gc, 1, 1, 0, oh, ow)
            elif cfg.gce_layer_style == "pw_then_dw":
                self.conv(lp + "pw", "pointwise", gc, gc, 1, 1, 0, eh, ew)
                oh, ow = self.conv(lp + "dw", "depthwise", gc, gc, k, k, 0, eh, ew)
            else:
                oh, ow = self.conv(lp + "conv", "standard", gc, gc, k, k, 0, eh, ew)
            if run:
                hh, ww = oh, ow
        full = gc * len(cfg.gce_kernels)
        used = gc * live
        self.rows.append(CostRow(p + "fuser.sca.conv", used * used, full * full + full))
        self.rows.append(CostRow(p + "fuser.reduce", h * w * used * c, full * c + c))
        self.free(p + "norm2", 2 * c)
        self.conv(p + "ffn1", "pointwise", c, 2 * c, 1, 1, 0, h, w)
        self.conv(p + "ffn2", "pointwise", c, c, 1, 1, 0, h, w)
        self.free(p + "beta", c)
        self.free(p + "gamma", c)

    def naf_block(self, p, c, h, w):
        self.free(p + "norm1", 2 * c)
        self.conv(p + "pw1", "pointwise", c, 2 * c, 1, 1, 0, h, w)
        self.conv(p + "dw", "depthwise", 2 * c, 2 * c, 3, 1, 1, h, w)
        self.conv(p + "sca.conv", "pointwise", c, c, 1, 1, 0, 1, 1)
        self.conv(p + "pw2", "pointwise", c, c, 1, 1, 0, h, w)
        self.free(p + "norm2", 2 * c)
        self.conv(p + "ffn1", "pointwise", c, 2 * c, 1, 1, 0, h, w)
        self.conv(p + "ffn2", "pointwise", c, c, 1, 1, 0, h, w)
        self.free(p + "beta", c)
        self.free(p + "gamma", c)

    def run(self, h, w):
        cfg = self.cfg
        self.conv("intro", "standard", 3, cfg.width, 3, 1, 1, h, w)
        for i, c in enumerate(cfg.stage_widths()):
            hh, ww = h >> i, w >> i
            for b in range(cfg.enc_blocks[i]):
                self.cg_block(f"encoders.{i}.{b}.", c, hh, ww)
            for b in range(cfg.enc_blocks[i], cfg.enc_blocks[i] + cfg.enc_extra_naf[i]):
                self.naf_block(f"encoders.{i}.{b}.", c, hh, ww)
            self.conv(f"downs.{i}", "standard", c, 2 * c, 2, 2, 0, hh, ww)
        hh, ww = h >> STAGES, w >> STAGES
        for b in range(cfg.middle_blocks):
            block = self.cg_block if cfg.gce_in_middle else self.naf_block
            block(f"middle.{b}.", cfg.middle_width, hh, ww)
        for j, c in enumerate(reversed(cfg.stage_widths())):
            hh, ww = h >> (STAGES - 1 - j), w >> (STAGES - 1 - j)
            self.conv(f"ups.{j}", "pointwise", 2 * c, 4 * c, 1, 1, 0, hh // 2, ww // 2)
            for b in range(cfg.dec_blocks[j]):
                block = self.cg_block if cfg.gce_in_decoder else self.naf_block
                block(f"decoders.{j}.{b}.", c, hh, ww)
        for k in range(cfg.heads):
            self.conv(f"heads.{k}", "standard", cfg.width, 3, 3, 1, 1, h, w)
        return self.rows


def count_macs(cfg: NetworkConfig, h: int, w: int) -> CostReport:
    mult = 2 ** STAGES
    if h < mult or w < mult or h % mult or w % mult:
        raise ValueError(f"resolution {h}x{w} must be a positive multiple of {mult}")
    return CostReport(_Walker(cfg).run(h, w), h, w)


def count_params(cfg: NetworkConfig) -> int:
    return count_macs(cfg, 2 ** STAGES, 2 ** STAGES).total_params


# --------------------------------------------------------- receptive field
@dataclass
class ProbeResult:
    pixels: set[tuple[int, int]] = field(default_factory=set)

    @property
    def bbox(self) -> tuple[int, int, int, int] | None:
        """(row0, col0, row1, col1), half-open; None when nothing influences."""
        if not self.pixels:
            return None
        rows = [p[0] for p in self.pixels]
        cols = [p[1] for p in self.pixels]
        return min(rows), min(cols), max(rows) + 1, max(cols) + 1

    @property
    def box_shape(self) -> tuple[int, int]:
        b = self.bbox
        return (0, 0) if b is None else (b[2] - b[0], b[3] - b[1])


def receptive_probe(fn: Callable[[Tensor], object], input_shape: tuple[int, int, int],
                    out_index: tuple, delta: float = 1e-3, seed: int = 0,
                    pixels=None, chunk: int = 64) -> ProbeResult:
    """Perturb each input pixel (all channels) by ``delta`` and record which ones
    change ``fn(x)[0][out_index]`` (any element, if the index selects several). ``fn`` maps an (n, C, H, W) batch to an
    array-like with a leading batch axis."""
    c, h, w = input_shape
    base = np.random.default_rng(seed).standard_normal((c, h, w))
    coords = list(pixels) if pixels is not None else [(i, j) for i in range(h) for j in range(w)]
    result = ProbeResult()
    for start in range(0, len(coords), chunk):
        part = coords[start:start + chunk]
        batch = np.repeat(base[None], len(part) + 1, axis=0)
        for b, (i, j) in enumerate(part, start=1):
            batch[b, :, i, j] += delta
        with no_grad():
            out = fn(Tensor(batch, dtype=np.float64))
        out = np.asarray(out.data if isinstance(out, Tensor) else out)
        ref = out[0][out_index]
        for b, ij in enumerate(part, start=1):
            if np.any(out[b][out_index] != ref):
                result.pixels.add(ij)
    return result


# ------------------------------------------------------------ context maps
def normalize_map(m: np.ndarray) -> np.ndarray:
    """Min-max to [0, 255] uint8; a zero-range map becomes all zeros."""
    m = np.asarray(m, dtype=np.float64)
    lo, hi = m.min(), m.max()
    if hi - lo <= 0:
        return np.zeros(m.shape, dtype=np.uint8)
    return np.rint((m - lo) / (hi - lo) * 255.0).astype(np.uint8)


def context_maps(model, image: np.ndarray, stage: int, block_index: int) -> dict[str, np.ndarray]:
    """Channel-mean of each present GCE context of encoder ``stage`` (0-based),
    block ``block_index`` (0-based), for one (3, H, W) image."""
    from .blocks import CGBlock

    if not 0 <= stage < len(model.encoders):
        raise ValueError(f"stage must be in [0, {len(model.encoders)})")
    blocks = model.encoders[stage]
    if block_index >= len(blocks) or not isinstance(blocks[block_index], CGBlock):
        raise ValueError(f"encoder stage {stage} block {block_index} has no GCE")
    block = blocks[block_index]
    block.record = True
    try:
        with no_grad():
            model(Tensor(np.asarray(image, dtype=np.float32)[None]))
        ctxs = block.last_contexts
    finally:
        block.record = False
        block.last_contexts = None
    maps = {}
    for name, t in zip(NAMES, (ctxs.local, ctxs.middle, ctxs.global_)):
        if t is not None:
            maps[name] = t.data[0].mean(axis=0)
    return maps


def dump_context_maps(model, image: np.ndarray, stage: int, block_index: int,
                      out_dir: str | os.PathLike) -> dict[str, np.ndarray]:
    """Write local/middle/global .pgm files; returns the uint8 maps written."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = {}
    for name, m in context_maps(model, image, stage, block_index).items():
        pix = normalize_map(m)
        write_gray(out / f"{name}.pgm", pix)
        written[name] = pix
    return written


def edge_energy(m: np.ndarray, height: int, width: int) -> float:
    """Mean absolute neighbour difference of a min-max normalised map after
    nearest upsampling to the image grid."""
    m = np.asarray(m, dtype=np.float64)
    rng = np.ptp(m)
    m = (m - m.min()) / rng if rng > 0 else np.zeros_like(m)
    up = nearest_resize(Tensor(m[None, None]), height, width).data[0, 0]
    return float((np.abs(np.diff(up, axis=0)).mean() + np.abs(np.diff(up, axis=1)).mean()) / 2)
