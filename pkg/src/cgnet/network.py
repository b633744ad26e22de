"""U-shaped CGNet: CG blocks in the encoder, NAF blocks elsewhere."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from . import functional as F
from .blocks import CGBlock, NAFBlock
from .gce import MergeStrategy, gce_layer_size
from .nn import Conv2d, Module, ModuleList
from .tensor import Tensor, stack

PLACEMENTS = ("encoder_only", "+middle", "+decoder", "+middle+decoder")
STAGES = 4


@dataclass(frozen=True)
class NetworkConfig:
    width: int = 60
    enc_blocks: tuple[int, ...] = (2, 2, 4, 6)
    middle_blocks: int = 10
    dec_blocks: tuple[int, ...] = (2, 2, 2, 2)
    enc_extra_naf: tuple[int, ...] = (0, 0, 0, 0)
    heads: int = 1
    gce_kernels: tuple[int, ...] = (3, 3, 5)
    gce_layer_style: str = "dw_then_pw"
    merge: MergeStrategy = field(default_factory=MergeStrategy)
    expand: int = 2
    gce_placement: str = "encoder_only"

    def __post_init__(self):
        for name in ("enc_blocks", "dec_blocks", "enc_extra_naf", "gce_kernels"):
            object.__setattr__(self, name, tuple(int(v) for v in getattr(self, name)))
        if self.width < 1:
            raise ValueError("width must be >= 1")
        if self.heads < 1:
            raise ValueError("heads must be >= 1")
        for name in ("enc_blocks", "dec_blocks", "enc_extra_naf"):
            vals = getattr(self, name)
            if len(vals) != STAGES or any(v < 0 for v in vals):
                raise ValueError(f"{name} needs {STAGES} non-negative counts, got {vals}")
        if self.middle_blocks < 0:
            raise ValueError("middle_blocks must be >= 0")
        if self.expand < 1:
            raise ValueError("expand must be >= 1")
        if self.gce_placement not in PLACEMENTS:
            raise ValueError(f"gce_placement must be one of {PLACEMENTS}")

    def replace(self, **changes) -> "NetworkConfig":
        return dataclasses.replace(self, **changes)

    @property
    def gce_in_middle(self) -> bool:
        return "middle" in self.gce_placement

    @property
    def gce_in_decoder(self) -> bool:
        return "decoder" in self.gce_placement

    def stage_widths(self) -> list[int]:
        return [self.width * 2 ** i for i in range(STAGES)]

    @property
    def middle_width(self) -> int:
        return self.width * 2 ** STAGES


PRESETS: dict[str, NetworkConfig] = {
    "sidd": NetworkConfig(width=60, enc_blocks=(2, 2, 4, 6), middle_blocks=10,
                          dec_blocks=(2, 2, 2, 2)),
    "gaussian": NetworkConfig(width=70, enc_blocks=(4, 4, 6, 8), middle_blocks=10,
                              dec_blocks=(2, 2, 2, 4)),
    "gopro": NetworkConfig(width=62, enc_blocks=(1, 1, 1, 2), enc_extra_naf=(0, 0, 0, 25),
                           middle_blocks=1, dec_blocks=(1, 1, 1, 1), heads=4),
    # one block per level at width 8: the ablation-scale model
    "desk": NetworkConfig(width=8, enc_blocks=(1, 1, 1, 1), middle_blocks=1,
                          dec_blocks=(1, 1, 1, 1)),
}


def preset(name: str, **overrides) -> NetworkConfig:
    try:
        cfg = PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    return cfg.replace(**overrides) if overrides else cfg


class CGNet(Module):
    def __init__(self, cfg: NetworkConfig, seed: int = 0):
        super().__init__()
        self.cfg = cfg
        rng = np.random.default_rng(seed)
        c = cfg.width

        def cg(width):
            return CGBlock(width, cfg.gce_kernels, cfg.gce_layer_style, cfg.merge, cfg.expand, rng)

        self.intro = Conv2d("standard", 3, c, 3, 1, 1, rng=rng)
        self.encoders = ModuleList()
        self.downs = ModuleList()
        for i, width in enumerate(cfg.stage_widths()):
            blocks = [cg(width) for _ in range(cfg.enc_blocks[i])]
            blocks += [NAFBlock(width, rng) for _ in range(cfg.enc_extra_naf[i])]
            self.encoders.append(ModuleList(blocks))
            self.downs.append(Conv2d("standard", width, 2 * width, 2, 2, 0, rng=rng))

        mid = cfg.middle_width
        self.middle = ModuleList(cg(mid) if cfg.gce_in_middle else NAFBlock(mid, rng)
                                 for _ in range(cfg.middle_blocks))

        self.ups = ModuleList()
        self.decoders = ModuleList()
        for j, width in enumerate(reversed(cfg.stage_widths())):
            # pointwise doubles channels; pixel shuffle trades 4x channels for 2x resolution
            self.ups.append(Conv2d("pointwise", 2 * width, 4 * width, rng=rng))
            self.decoders.append(ModuleList(cg(width) if cfg.gce_in_decoder else NAFBlock(width, rng)
                                            for _ in range(cfg.dec_blocks[j])))

        self.heads = ModuleList(Conv2d("standard", c, 3, 3, 1, 1, rng=rng) for _ in range(cfg.heads))

    def check_input(self, h: int, w: int) -> None:
        mult = 2 ** STAGES
        if h % mult or w % mult:
            raise ValueError(f"input extents {h}x{w} must be multiples of {mult}")
        k1 = self.cfg.gce_kernels[0]
        levels = [(f"encoder stage {i + 1}", h >> i, w >> i, self.cfg.enc_blocks[i] > 0)
                  for i in range(STAGES)]
        levels.append(("middle", h >> STAGES, w >> STAGES,
                       self.cfg.gce_in_middle and self.cfg.middle_blocks > 0))
        levels += [(f"decoder stage {j + 1}", h >> (STAGES - 1 - j), w >> (STAGES - 1 - j),
                    self.cfg.gce_in_decoder and self.cfg.dec_blocks[j] > 0) for j in range(STAGES)]
        for name, hh, ww, has_gce in levels:
            if has_gce and (gce_layer_size(hh, k1) == 0 or gce_layer_size(ww, k1) == 0):
                raise ValueError(f"{name} runs at {hh}x{ww}, below the first GCE kernel ({k1})")

    def features(self, x: Tensor) -> Tensor:
        y = self.intro(x)
        skips = []
        for blocks, down in zip(self.encoders, self.downs):
            for b in blocks:
                y = b(y)
            skips.append(y)
            y = down(y)
        for b in self.middle:
            y = b(y)
        for up, blocks, skip in zip(self.ups, self.decoders, reversed(skips)):
            y = F.pixel_shuffle(up(y), 2) + skip
            for b in blocks:
                y = b(y)
        return y

    def forward(self, x: Tensor) -> Tensor:
        """(n, 3, H, W) -> (n, K, 3, H, W); each head predicts a residual."""
        if x.ndim != 4 or x.shape[1] != 3:
            raise ValueError(f"expected an n x 3 x H x W image batch, got {x.shape}")
        self.check_input(x.shape[2], x.shape[3])
        feats = self.features(x)
        return stack([x + head(feats) for head in self.heads], axis=1)

    def restore(self, x: Tensor) -> Tensor:
        """Single restored image per input: the mean over heads."""
        out = self.forward(x)
        return out.mean(axis=1) if out.shape[1] > 1 else out[:, 0]

    def cg_blocks(self) -> list[tuple[str, CGBlock]]:
        return [(name, m) for name, m in _named_modules(self) if isinstance(m, CGBlock)]


def _named_modules(module: Module, prefix: str = ""):
    yield prefix.rstrip("."), module
    for name, child in module._children.items():
        yield from _named_modules(child, prefix + name + ".")


def build(cfg: NetworkConfig, seed: int = 0) -> CGNet:
    return CGNet(cfg, seed)


def parameter_inventory(cfg: NetworkConfig) -> dict[str, tuple[int, ...]]:
    """Parameter names and shapes implied by a config (independent of the seed)."""
    return {name: p.shape for name, p in build(cfg, 0).named_parameters()}
