"""Cost of each ablation variant of the desk model at 256x256, next to published figures.

Optionally trains every variant briefly (--iters N) and reports held-out PSNR.
"""

import argparse

from cgnet.gce import MergeStrategy
from cgnet.network import build, preset
from cgnet.profiler import count_macs
from cgnet.restoration import EvalSet, ImagePool, NoiseModel, TrainPlan, evaluate, train

# variant -> (config overrides, published GMACs, published M params)
VARIANTS = {
    "baseline": ({}, 0.446, 0.406),
    "gce +middle": (dict(gce_placement="+middle"), 0.460, 0.737),
    "gce +decoder": (dict(gce_placement="+decoder"), 0.506, 0.517),
    "gce +middle+decoder": (dict(gce_placement="+middle+decoder"), 0.520, 0.848),
    "kernels [5,3,3]": (dict(gce_kernels=(5, 3, 3)), 0.442, 0.408),
    "layers pw_then_dw": (dict(gce_layer_style="pw_then_dw"), 0.464, 0.406),
    "layers standard": (dict(gce_layer_style="standard"), 0.480, 0.498),
    "expand x1 (C)": (dict(expand=1, merge=MergeStrategy("none")), 0.401, 0.355),
    "expand x2 (2C)": (dict(expand=2, merge=MergeStrategy("none")), 0.507, 0.569),
    "merge channel_cosine": (dict(merge=MergeStrategy("dynamic", "channel_cosine")), None, None),
    "merge kernel_cosine": (dict(merge=MergeStrategy("dynamic", "kernel_cosine")), None, None),
    "merge kernel_mae": (dict(merge=MergeStrategy("dynamic", "kernel_mae")), None, None),
}


def fmt(v):
    return f"{v:.3f}" if v is not None else "-"


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--iters", type=int, default=0, help="train each variant this long (0: cost only)")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    print(f"{'variant':<24}{'GMACs':>8}{'pub':>8}{'M params':>10}{'pub':>8}{'PSNR':>8}")
    for name, (change, pub_macs, pub_params) in VARIANTS.items():
        cfg = preset("desk", **change)
        rep = count_macs(cfg, 256, 256)
        score = "-"
        if args.iters:
            model = build(cfg, seed=args.seed)
            noise = NoiseModel(25.0)
            held = EvalSet.synthetic(16, 64, noise)
            train(model, TrainPlan(iters=args.iters, patch_schedule=[(0, 64)], eval_every=args.iters,
                                   seed=args.seed), ImagePool.synthetic(64, 96, args.seed), noise)
            score = f"{evaluate(model, held)[1]:.2f}"
        print(f"{name:<24}{rep.total_macs / 1e9:>8.3f}{fmt(pub_macs):>8}"
              f"{rep.total_params / 1e6:>10.3f}{fmt(pub_params):>8}{score:>8}")


if __name__ == "__main__":
    main()
