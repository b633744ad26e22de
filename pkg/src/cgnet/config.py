"""key=value run configuration: schema, parser, and conversion to module configs.

File format: UTF-8, one ``key=value`` per line, ``#`` starts a comment, blank
lines ignored. Values given on the command line override file values. Network
keys left unset fall back to the chosen preset.
"""

from __future__ import annotations

import difflib
import os
from dataclasses import dataclass, field
from typing import Any, Callable

from .gce import MergeStrategy
from .network import PRESETS, NetworkConfig, preset
from .restoration import NoiseModel, TrainPlan


class ConfigError(ValueError):
    pass


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.replace(" ", "").split(",") if v)


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _schedule(text: str) -> list[tuple[int, int]]:
    """``0:32,1000:48`` -> [(0, 32), (1000, 48)]; a bare ``32`` means [(0, 32)]."""
    out = []
    for part in text.replace(" ", "").split(","):
        if ":" in part:
            start, size = part.split(":")
            out.append((int(start), int(size)))
        else:
            out.append((0, int(part)))
    return out


def _merge(text: str) -> MergeStrategy:
    """``static``, ``none`` or ``dynamic:<similarity>``."""
    kind, _, sim = text.partition(":")
    return MergeStrategy(kind, sim or None)


def _resolution(text: str) -> tuple[int, int]:
    h, _, w = text.lower().partition("x")
    return int(h), int(w or h)


def _optional_float(text: str) -> float | None:
    return None if text.strip().lower() in ("", "none", "0") else float(text)


@dataclass(frozen=True)
class Key:
    parse: Callable[[str], Any]
    default: Any
    help: str
    group: str


SCHEMA: dict[str, Key] = {
    # network (None: take the preset value)
    "preset": Key(str, "desk", f"network preset: {', '.join(PRESETS)}", "network"),
    "width": Key(int, None, "channels after the intro conv", "network"),
    "enc_blocks": Key(_ints, None, "CG blocks per encoder stage, e.g. 2,2,4,6", "network"),
    "enc_extra_naf": Key(_ints, None, "NAF blocks appended per encoder stage", "network"),
    "middle_blocks": Key(int, None, "blocks at the bottleneck", "network"),
    "dec_blocks": Key(_ints, None, "blocks per decoder stage", "network"),
    "heads": Key(int, None, "number of output heads", "network"),
    "gce_kernels": Key(_ints, None, "GCE kernel sizes, e.g. 3,3,5", "network"),
    "gce_layer_style": Key(str, None, "dw_then_pw | pw_then_dw | standard", "network"),
    "merge": Key(_merge, None, "static | none | dynamic:<channel_cosine|kernel_cosine|kernel_mae>",
                 "network"),
    "expand": Key(int, None, "CG block expansion factor", "network"),
    "gce_placement": Key(str, None, "encoder_only | +middle | +decoder | +middle+decoder", "network"),
    # training
    "iters": Key(int, 2000, "training iterations", "train"),
    "batch": Key(int, 8, "patches per iteration", "train"),
    "patch_schedule": Key(_schedule, [(0, 32)], "start:size list, e.g. 0:32,1000:48", "train"),
    "lr_start": Key(float, 1e-3, "initial learning rate", "train"),
    "lr_end": Key(float, 1e-7, "final learning rate", "train"),
    "beta1": Key(float, 0.9, "AdamW first-moment decay", "train"),
    "beta2": Key(float, 0.9, "AdamW second-moment decay", "train"),
    "adam_eps": Key(float, 1e-8, "AdamW epsilon", "train"),
    "weight_decay": Key(float, 0.0, "decoupled weight decay", "train"),
    "grad_clip": Key(_optional_float, None, "global grad-norm clip (none/0 disables)", "train"),
    "eval_every": Key(int, 250, "iterations between held-out evaluations", "train"),
    "pool_size": Key(int, 64, "synthetic training images", "train"),
    "pool_image_size": Key(int, 64, "extent of each synthetic training image", "train"),
    "eval_count": Key(int, 16, "held-out evaluation images", "train"),
    "eval_size": Key(int, 32, "extent of each held-out image", "train"),
    # noise
    "sigma": Key(float, 25.0, "Gaussian noise std on the 0-255 scale", "noise"),
    "noise_seed": Key(int, 0, "seed of the noise stream", "noise"),
    "clip_noise": Key(_bool, False, "clip noisy images to [0, 1]", "noise"),
    # paths and command arguments
    "out_dir": Key(str, None, "output directory", "paths"),
    "checkpoint": Key(str, None, "checkpoint file (.cgnz)", "paths"),
    "input": Key(str, None, "input image file or directory", "paths"),
    "reference": Key(str, None, "clean reference image file or directory", "paths"),
    "data_dir": Key(str, None, "directory with clean/ and noisy/ subdirectories", "paths"),
    "count": Key(int, 16, "synth-data: number of pairs", "paths"),
    "image_size": Key(int, 64, "synth-data: image extent", "paths"),
    "res": Key(_resolution, (256, 256), "profile: input resolution, N or HxW", "paths"),
    "format": Key(str, "table", "profile: table | csv", "paths"),
    "stage": Key(int, 0, "visualize: encoder stage (0-based)", "paths"),
    "block": Key(int, 0, "visualize: block within the stage (0-based)", "paths"),
    "seeds": Key(int, 20, "gradcheck: number of consecutive seeds", "paths"),
    # reproducibility
    "seed": Key(int, 0, "seed for weights, sampling and synthetic data", "run"),
}


def _unknown(key: str, where: str) -> ConfigError:
    near = difflib.get_close_matches(key, list(SCHEMA), n=1)
    hint = f"; did you mean '{near[0]}'?" if near else ""
    return ConfigError(f"unknown config key '{key}'{where}{hint}")


def read_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    """Raw key -> value strings from file text; validates keys, not values."""
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigError(f"{source}:{lineno}: expected key=value, got {line!r}")
        if key not in SCHEMA:
            raise _unknown(key, f" at {source}:{lineno}")
        raw[key] = value
    return raw


@dataclass
class RunConfig:
    values: dict[str, Any] = field(default_factory=dict)
    explicit: set[str] = field(default_factory=set)

    def __getitem__(self, key: str) -> Any:
        return self.values[key]

    def require(self, *keys: str, command: str = "") -> None:
        for k in keys:
            if self.values.get(k) is None:
                raise ConfigError(f"{command or 'command'} requires '{k}' (set {k}=... or --{k})")

    def network(self) -> NetworkConfig:
        overrides = {k: self.values[k] for k in SCHEMA
                     if SCHEMA[k].group == "network" and k != "preset" and self.values[k] is not None}
        try:
            return preset(self.values["preset"], **overrides)
        except (KeyError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    def train_plan(self) -> TrainPlan:
        v = self.values
        try:
            return TrainPlan(iters=v["iters"], batch=v["batch"], patch_schedule=v["patch_schedule"],
                             lr_start=v["lr_start"], lr_end=v["lr_end"], beta1=v["beta1"],
                             beta2=v["beta2"], eps=v["adam_eps"], weight_decay=v["weight_decay"],
                             grad_clip=v["grad_clip"], eval_every=v["eval_every"], seed=v["seed"])
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def noise(self) -> NoiseModel:
        try:
            return NoiseModel(self.values["sigma"], self.values["noise_seed"], self.values["clip_noise"])
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def render(self) -> str:
        """Resolved configuration as a replayable key=value file."""
        lines = ["# resolved configuration"]
        for k in SCHEMA:
            v = self.values[k]
            text = f"{v[0]}x{v[1]}" if k == "res" else _format(v)
            lines.append(f"{k}={text}")
        return "\n".join(lines) + "\n"


def _format(v: Any) -> str:
    if v is None:
        return "none"
    if isinstance(v, MergeStrategy):
        return v.kind + (f":{v.similarity}" if v.similarity else "")
    if isinstance(v, tuple) and v and all(isinstance(i, int) for i in v):
        return ",".join(map(str, v))
    if isinstance(v, list):
        return ",".join(f"{s}:{p}" for s, p in v)
    return str(v)


def _parse_value(key: str, text: str) -> Any:
    spec = SCHEMA[key]
    if spec.default is None and spec.group in ("network", "paths") and text.lower() == "none":
        return None
    try:
        return spec.parse(text)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"bad value for '{key}': {text!r} ({exc})") from exc


def parse_config(path: str | os.PathLike | None = None,
                 overrides: dict[str, str] | None = None) -> RunConfig:
    """Defaults < file values < ``overrides``. Unset network keys come from the preset."""
    raw: dict[str, str] = {}
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            raw.update(read_config_text(fh.read(), os.fspath(path)))
    for key, value in (overrides or {}).items():
        if key not in SCHEMA:
            raise _unknown(key, "")
        raw[key] = value
    values = {k: spec.default for k, spec in SCHEMA.items()}
    for k, text in raw.items():
        values[k] = _parse_value(k, text)
    cfg = RunConfig(values, set(raw))
    if values["preset"] not in PRESETS:
        raise ConfigError(f"unknown preset {values['preset']!r}; choose from {sorted(PRESETS)}")
    # fill network keys from the preset so the dump replays without the preset table
    net = cfg.network()
    for k in SCHEMA:
        if SCHEMA[k].group == "network" and k != "preset" and values[k] is None:
            values[k] = getattr(net, k)
    cfg.train_plan()
    cfg.noise()
    return cfg
