"""Command-line entry point.

Commands: train, denoise, eval, profile, gradcheck, visualize, synth-data.
Every command accepts ``--config FILE`` plus any schema key as ``--key value``
(flags override the file). The resolved configuration is echoed to stderr
before the command runs.

Exit codes: 0 success, 1 usage or configuration error, 2 I/O error (missing
file, bad image, bad checkpoint), 3 numeric failure (divergence, failed
gradient check).
"""

from __future__ import annotations

import argparse
import difflib
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import checkpoint
from .config import SCHEMA, ConfigError, RunConfig, parse_config
from .gradcheck import TOLERANCE, run_suite
from .imageio import ImageFormatError, read_image, write_image
from .network import STAGES, build
from .profiler import count_macs, dump_context_maps
from .restoration import (EvalSet, ImagePool, add_gaussian_noise, evaluate, psnr, restore, ssim,
                          synth_image, train)
from .tensor import NonFiniteError, Tensor, no_grad

EXIT_USAGE, EXIT_IO, EXIT_NUMERIC = 1, 2, 3


class UsageError(Exception):
    pass


class NumericFailure(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


NETWORK_KEYS = [k for k, v in SCHEMA.items() if v.group == "network"]
TRAIN_KEYS = [k for k, v in SCHEMA.items() if v.group in ("train", "noise")]

COMMANDS: dict[str, tuple[str, list[str]]] = {
    "train": ("train a model; writes model.cgnz, metrics.tsv and config.txt to out_dir",
              NETWORK_KEYS + TRAIN_KEYS + ["out_dir", "data_dir", "checkpoint", "seed"]),
    "denoise": ("restore an image or a directory of images into out_dir",
                NETWORK_KEYS + ["checkpoint", "input", "reference", "out_dir", "seed"]),
    "eval": ("PSNR/SSIM over data_dir/{clean,noisy}; restores noisy first if a checkpoint is given",
             NETWORK_KEYS + ["data_dir", "checkpoint", "seed"]),
    "profile": ("analytic MACs and parameter table",
                NETWORK_KEYS + ["res", "format", "seed"]),
    "gradcheck": ("finite-difference gradient checks of all primitives and blocks",
                  ["seed", "seeds"]),
    "visualize": ("write GCE context maps of one encoder block as .pgm files",
                  NETWORK_KEYS + ["checkpoint", "input", "image_size", "stage", "block", "out_dir",
                                  "seed"]),
    "synth-data": ("write count clean/noisy image pairs to out_dir/{clean,noisy}",
                   ["count", "image_size", "sigma", "noise_seed", "out_dir", "seed"]),
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cgnet", description=__doc__.split("\n\n")[0],
                     epilog="exit codes: 1 usage, 2 I/O, 3 numeric failure")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True
    for name, (help_text, keys) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", help="key=value configuration file")
        for k in keys:
            spec = SCHEMA[k]
            default = "preset" if spec.default is None and spec.group == "network" else spec.default
            flags = [f"--{k}"] + ([f"--{k.replace('_', '-')}"] if "_" in k else [])
            p.add_argument(*flags, dest=k, metavar="V", default=argparse.SUPPRESS,
                           help=f"{spec.help} (default: {default})")
    return parser


def _usage_hint(argv: list[str]) -> str:
    """Nearest valid key for an unrecognised --flag, if any."""
    for a in argv:
        if a.startswith("--"):
            key = a[2:].split("=")[0].replace("-", "_")
            if key != "config" and key not in SCHEMA:
                near = difflib.get_close_matches(key, list(SCHEMA), n=1)
                if near:
                    return f" (did you mean --{near[0]}?)"
    return ""


# --------------------------------------------------------------- helpers
def _model(cfg: RunConfig):
    net = cfg.network()
    if cfg["checkpoint"]:
        return checkpoint.load(cfg["checkpoint"], net, cfg["seed"])
    return build(net, cfg["seed"])


def _images_in(path: Path) -> list[Path]:
    if path.is_dir():
        files = sorted(p for p in path.iterdir() if p.suffix.lower() in (".ppm", ".pnm"))
        if not files:
            raise FileNotFoundError(f"no .ppm images in {path}")
        return files
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    return [path]


def _fit_size(model, n: int) -> int:
    """Smallest extent >= n the network accepts."""
    mult = 2 ** STAGES
    size = max(mult, -(-n // mult) * mult)
    while True:
        try:
            model.check_input(size, size)
            return size
        except ValueError:
            size += mult


def restore_any(model, img: np.ndarray) -> np.ndarray:
    """Restore one (3, H, W) image of any size by symmetric padding then cropping."""
    _, h, w = img.shape
    th, tw = _fit_size(model, h), _fit_size(model, w)
    padded = np.pad(img, ((0, 0), (0, th - h), (0, tw - w)), mode="symmetric")
    with no_grad():
        out = model.restore(Tensor(padded[None].astype(np.float32))).data[0]
    return out[:, :h, :w]


# -------------------------------------------------------------- commands
def cmd_train(cfg: RunConfig) -> int:
    cfg.require("out_dir", command="train")
    out = Path(cfg["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(cfg.render(), encoding="utf-8")
    model = _model(cfg)
    if cfg["data_dir"]:
        pool = ImagePool([read_image(p) for p in _images_in(Path(cfg["data_dir"]) / "clean")])
    else:
        pool = ImagePool.synthetic(cfg["pool_size"], cfg["pool_image_size"], cfg["seed"])
    noise = cfg.noise()
    held = EvalSet.synthetic(cfg["eval_count"], cfg["eval_size"], noise)
    log_path = out / "metrics.tsv"
    log_path.write_text("iter\tlr\tloss\tpsnr\n", encoding="utf-8")
    noisy_psnr, before = evaluate(model, held)
    train(model, cfg.train_plan(), pool, noise, held, log_path)
    _, after = evaluate(model, held)
    checkpoint.save(model, out / "model.cgnz")
    print(f"held-out PSNR: noisy {noisy_psnr:.3f} dB, initial {before:.3f} dB, "
          f"trained {after:.3f} dB (gain {after - noisy_psnr:+.3f} dB)")
    print(f"wrote {out / 'model.cgnz'}, {log_path}, {out / 'config.txt'}")
    return 0


def cmd_denoise(cfg: RunConfig) -> int:
    cfg.require("checkpoint", "input", "out_dir", command="denoise")
    inputs = _images_in(Path(cfg["input"]))
    out = Path(cfg["out_dir"])
    in_dirs = {p.parent.resolve() for p in inputs}
    if out.resolve() in in_dirs:
        raise UsageError("out_dir must differ from the input directory; inputs are never overwritten")
    refs = None
    if cfg["reference"]:
        ref = Path(cfg["reference"])
        refs = [ref / p.name for p in inputs] if ref.is_dir() else [ref]
        if len(refs) != len(inputs):
            raise UsageError("a single reference file needs a single input file")
    model = _model(cfg)
    out.mkdir(parents=True, exist_ok=True)
    scores = []
    for i, src in enumerate(inputs):
        img = read_image(src)
        if img.shape[0] != 3:
            raise ImageFormatError(f"{src}: expected an RGB (P6) image")
        restored = restore_any(model, img)
        dst = out / (src.stem + ".ppm")
        write_image(dst, np.clip(restored, 0.0, 1.0))
        line = f"{src.name} -> {dst}"
        if refs is not None:
            score = psnr(restored, read_image(refs[i]))
            scores.append(score)
            line += f"  PSNR {score:.3f} dB"
        print(line)
    if len(scores) > 1:
        print(f"mean PSNR {np.mean(scores):.3f} dB over {len(scores)} images")
    return 0


def cmd_eval(cfg: RunConfig) -> int:
    cfg.require("data_dir", command="eval")
    root = Path(cfg["data_dir"])
    clean_files = _images_in(root / "clean")
    model = _model(cfg) if cfg["checkpoint"] else None
    rows = []
    for cf in clean_files:
        clean = read_image(cf)
        noisy = read_image(root / "noisy" / cf.name)
        pred = restore_any(model, noisy) if model is not None else noisy
        rows.append((cf.name, psnr(pred, clean), ssim(pred, clean)))
    what = "restored" if model is not None else "noisy"
    for name, p, s in rows:
        print(f"{name}\tpsnr {p:.3f}\tssim {s:.4f}")
    # order-independent aggregation: sort before summing
    mean_p = float(np.mean(sorted(r[1] for r in rows)))
    mean_s = float(np.mean(sorted(r[2] for r in rows)))
    print(f"{what}: mean PSNR {mean_p:.3f} dB, mean SSIM {mean_s:.4f} over {len(rows)} images")
    return 0


def cmd_profile(cfg: RunConfig) -> int:
    h, w = cfg["res"]
    try:
        report = count_macs(cfg.network(), h, w)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    if cfg["format"] == "csv":
        sys.stdout.write(report.to_csv())
    elif cfg["format"] == "table":
        print(report.render())
    else:
        raise UsageError(f"format must be table or csv, got {cfg['format']!r}")
    return 0


def cmd_gradcheck(cfg: RunConfig) -> int:
    if cfg["seeds"] < 1:
        raise UsageError("seeds must be >= 1")
    seeds = range(cfg["seed"], cfg["seed"] + cfg["seeds"])
    results = run_suite(seeds)
    worst: dict[str, float] = {}
    for r in results:
        worst[r.name] = max(worst.get(r.name, 0.0), r.max_rel_err)
    failed = 0
    for name, err in worst.items():
        ok = err < TOLERANCE
        failed += not ok
        print(f"{'PASS' if ok else 'FAIL'}  {name:<32} max rel err {err:.3e}")
    print(f"{len(worst) - failed}/{len(worst)} checks passed over seeds "
          f"{seeds.start}..{seeds.stop - 1} (tolerance {TOLERANCE:g})")
    if failed:
        raise NumericFailure(f"{failed} gradient checks failed")
    return 0


def cmd_visualize(cfg: RunConfig) -> int:
    cfg.require("out_dir", command="visualize")
    model = _model(cfg)
    if cfg["input"]:
        img = read_image(cfg["input"])
    else:
        img = synth_image(cfg["seed"], cfg["image_size"], cfg["image_size"])
    try:
        written = dump_context_maps(model, img, cfg["stage"], cfg["block"], cfg["out_dir"])
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    for name, pix in written.items():
        print(f"{name}: {pix.shape[0]}x{pix.shape[1]} -> {Path(cfg['out_dir']) / (name + '.pgm')}")
    return 0


def cmd_synth_data(cfg: RunConfig) -> int:
    cfg.require("out_dir", command="synth-data")
    out = Path(cfg["out_dir"])
    (out / "clean").mkdir(parents=True, exist_ok=True)
    (out / "noisy").mkdir(parents=True, exist_ok=True)
    noise = cfg.noise()
    size = cfg["image_size"]
    for i in range(cfg["count"]):
        clean = synth_image(cfg["seed"] * 100_003 + i, size, size)
        noisy = add_gaussian_noise(clean, noise, np.random.default_rng([noise.seed, i]))
        write_image(out / "clean" / f"{i:04d}.ppm", clean)
        write_image(out / "noisy" / f"{i:04d}.ppm", np.clip(noisy, 0.0, 1.0))
    print(f"wrote {cfg['count']} pairs to {out}")
    return 0


HANDLERS = {"train": cmd_train, "denoise": cmd_denoise, "eval": cmd_eval, "profile": cmd_profile,
            "gradcheck": cmd_gradcheck, "visualize": cmd_visualize, "synth-data": cmd_synth_data}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
        flags = {k: v for k, v in vars(args).items() if k not in ("command", "config")}
        cfg = parse_config(args.config, flags)
        sys.stderr.write(f"# command: {args.command}\n" + cfg.render())
        logging.basicConfig(level=logging.INFO, format="%(message)s", stream=sys.stderr)
        return HANDLERS[args.command](cfg)
    except UsageError as exc:
        print(f"error: {exc}{_usage_hint(argv)}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except (ConfigError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ImageFormatError, checkpoint.CheckpointError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (NonFiniteError, NumericFailure) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
