"""Cascaded global-context restoration network on a small numpy autodiff core."""

from .blocks import CGBlock, NAFBlock
from .checkpoint import load, save
from .config import RunConfig, parse_config
from .gce import GCE, GceConfig, MergeStrategy, gce_layer_size
from .network import PRESETS, CGNet, NetworkConfig, build, preset
from .profiler import count_macs, count_params
from .restoration import NoiseModel, TrainPlan, psnr, ssim, train
from .tensor import Tensor, no_grad

__all__ = [
    "CGBlock", "NAFBlock", "load", "save", "RunConfig", "parse_config", "GCE", "GceConfig",
    "MergeStrategy", "gce_layer_size", "PRESETS", "CGNet", "NetworkConfig", "build", "preset",
    "count_macs", "count_params", "NoiseModel", "TrainPlan", "psnr", "ssim", "train", "Tensor",
    "no_grad",
]
