"""Synthetic denoising data, quality metrics, and the training loop."""

from __future__ import annotations

import logging
import math
import os
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .optim import AdamW, LrSchedule, clip_grad_norm, cosine_lr
from .tensor import NonFiniteError, Tensor, log10, no_grad

logger = logging.getLogger(__name__)

PSNR_EPS = 1e-8
PSNR_CAP = 80.0


@dataclass(frozen=True)
class NoiseModel:
    sigma: float = 25.0  # on the 0-255 scale
    seed: int = 0
    clip: bool = False

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError(f"sigma must be non-negative, got {self.sigma}")


def add_gaussian_noise(img, nm: NoiseModel, rng: np.random.Generator | None = None) -> np.ndarray:
    """img + N(0, (sigma/255)^2), i.i.d. per element; unclipped unless ``nm.clip``."""
    if nm.sigma < 0:
        raise ValueError(f"sigma must be non-negative, got {nm.sigma}")
    img = np.asarray(img.data if isinstance(img, Tensor) else img)
    if nm.sigma == 0:
        return img.copy()
    rng = rng if rng is not None else np.random.default_rng(nm.seed)
    noisy = img + rng.normal(0.0, nm.sigma / 255.0, size=img.shape).astype(img.dtype)
    if nm.clip:
        noisy = np.clip(noisy, 0.0, 1.0)
    return noisy


def synth_image(seed: int, h: int, w: int) -> np.ndarray:
    """Deterministic clean RGB image (3, h, w) in [0, 1]: a colour ramp, a few
    flat rectangles and ellipses, and low-frequency sinusoidal texture."""
    if h < 1 or w < 1:
        raise ValueError("image extents must be >= 1")
    rng = np.random.default_rng(seed)
    yy, xx = np.meshgrid(np.linspace(0, 1, h), np.linspace(0, 1, w), indexing="ij")

    theta = rng.uniform(0, 2 * np.pi)
    ramp = np.cos(theta) * xx + np.sin(theta) * yy
    ramp = (ramp - ramp.min()) / max(np.ptp(ramp), 1e-12)
    c0, c1 = rng.uniform(0.1, 0.9, size=(2, 3, 1, 1))
    img = c0 + (c1 - c0) * ramp[None]

    for _ in range(int(rng.integers(3, 9))):
        color = rng.uniform(0, 1, size=(3, 1, 1))
        cy, cx = rng.uniform(0, 1, size=2)
        ry, rx = rng.uniform(0.08, 0.35, size=2)
        if rng.random() < 0.5:
            mask = (np.abs(yy - cy) < ry) & (np.abs(xx - cx) < rx)
        else:
            mask = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 < 1.0
        alpha = rng.uniform(0.6, 1.0)
        img = np.where(mask[None], (1 - alpha) * img + alpha * color, img)

    for _ in range(3):
        fy, fx = rng.uniform(1, 6, size=2)
        phase = rng.uniform(0, 2 * np.pi)
        amp = rng.uniform(0.01, 0.05, size=(3, 1, 1))
        img = img + amp * np.sin(2 * np.pi * (fy * yy + fx * xx) + phase)[None]

    return np.clip(img, 0.0, 1.0).astype(np.float32)


# ------------------------------------------------------------------ metrics
def _arr(x) -> np.ndarray:
    return np.asarray(x.data if isinstance(x, Tensor) else x, dtype=np.float64)


def psnr(a, b, peak: float = 1.0) -> float:
    a, b = _arr(a), _arr(b)
    if a.shape != b.shape:
        raise ValueError(f"psnr shape mismatch: {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    return min(PSNR_CAP, 10.0 * math.log10(peak * peak / (mse + PSNR_EPS)))


def batch_psnr(a, b, peak: float = 1.0) -> float:
    """Mean of per-image PSNR over the leading axis."""
    a, b = _arr(a), _arr(b)
    if a.shape != b.shape:
        raise ValueError(f"psnr shape mismatch: {a.shape} vs {b.shape}")
    return float(np.mean([psnr(x, y, peak) for x, y in zip(a, b)]))


def neg_psnr_loss(pred: Tensor, target, peak: float = 1.0) -> Tensor:
    """-mean over the batch of per-image PSNR (uncapped, differentiable)."""
    target = target if isinstance(target, Tensor) else Tensor(np.asarray(target, dtype=pred.dtype))
    if pred.shape != target.shape:
        raise ValueError(f"loss shape mismatch: {pred.shape} vs {target.shape}")
    diff = pred - target
    axes = tuple(range(1, pred.ndim))
    mse = (diff * diff).mean(axis=axes)
    return (log10(mse + PSNR_EPS) * 10.0).mean() + 20.0 * math.log10(1.0 / peak)


def _gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2
    g = np.exp(-(x ** 2) / (2 * sigma ** 2))
    return g / g.sum()


def _filter_valid(img: np.ndarray, win: np.ndarray) -> np.ndarray:
    k = len(win)
    rows = np.lib.stride_tricks.sliding_window_view(img, k, axis=-2) @ win
    return np.lib.stride_tricks.sliding_window_view(rows, k, axis=-1) @ win


def ssim(a, b, peak: float = 1.0, k1: float = 0.01, k2: float = 0.03) -> float:
    """Mean SSIM with an 11x11 Gaussian window (sigma 1.5); channels averaged."""
    a, b = _arr(a), _arr(b)
    if a.shape != b.shape:
        raise ValueError(f"ssim shape mismatch: {a.shape} vs {b.shape}")
    if a.ndim == 2:
        a, b = a[None], b[None]
    if a.shape[-1] < 11 or a.shape[-2] < 11:
        raise ValueError(f"ssim needs extents >= 11, got {a.shape[-2:]}")
    c1, c2 = (k1 * peak) ** 2, (k2 * peak) ** 2
    win = _gaussian_window()
    mu_a, mu_b = _filter_valid(a, win), _filter_valid(b, win)
    var_a = _filter_valid(a * a, win) - mu_a ** 2
    var_b = _filter_valid(b * b, win) - mu_b ** 2
    cov = _filter_valid(a * b, win) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


# --------------------------------------------------------------------- data
class ImagePool:
    """Clean images (3, H, W) from which random crops are drawn."""

    def __init__(self, images: Sequence[np.ndarray]):
        if not images:
            raise ValueError("empty image pool")
        self.images = [np.asarray(im, dtype=np.float32) for im in images]

    @classmethod
    def synthetic(cls, count: int, size: int, seed: int = 0) -> "ImagePool":
        return cls([synth_image(seed * 100_003 + i, size, size) for i in range(count)])

    def __len__(self):
        return len(self.images)

    def sample(self, rng: np.random.Generator, batch: int, patch: int) -> np.ndarray:
        out = np.empty((batch, 3, patch, patch), dtype=np.float32)
        for b in range(batch):
            im = self.images[int(rng.integers(len(self.images)))]
            h, w = im.shape[1:]
            if h < patch or w < patch:
                raise ValueError(f"image {h}x{w} smaller than patch {patch}")
            y = int(rng.integers(h - patch + 1))
            x = int(rng.integers(w - patch + 1))
            out[b] = im[:, y:y + patch, x:x + patch]
        return out


@dataclass
class TrainPlan:
    iters: int = 2000
    batch: int = 8
    patch_schedule: list[tuple[int, int]] = field(default_factory=lambda: [(0, 32)])
    lr_start: float = 1e-3
    lr_end: float = 1e-7
    beta1: float = 0.9
    beta2: float = 0.9
    eps: float = 1e-8
    weight_decay: float = 0.0
    grad_clip: float | None = None
    eval_every: int = 250
    seed: int = 0

    def __post_init__(self):
        if self.iters < 0 or self.batch < 1:
            raise ValueError("iters must be >= 0 and batch >= 1")
        self.patch_schedule = [(int(s), int(p)) for s, p in self.patch_schedule]
        if not self.patch_schedule or self.patch_schedule[0][0] != 0:
            raise ValueError("patch_schedule must start at iteration 0")
        starts = [s for s, _ in self.patch_schedule]
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise ValueError("patch_schedule iterations must be strictly increasing")
        if any(p % 16 for _, p in self.patch_schedule):
            raise ValueError("patch sizes must be multiples of 16")

    def patch_at(self, t: int) -> int:
        size = self.patch_schedule[0][1]
        for start, p in self.patch_schedule:
            if t >= start:
                size = p
        return size

    @property
    def lr_schedule(self) -> LrSchedule:
        return LrSchedule(self.lr_start, self.lr_end, max(self.iters, 1))


@dataclass
class EvalSet:
    clean: np.ndarray  # (n, 3, H, W)
    noisy: np.ndarray

    @classmethod
    def synthetic(cls, count: int, size: int, noise: NoiseModel, seed: int = 10_000) -> "EvalSet":
        clean = np.stack([synth_image(seed + i, size, size) for i in range(count)])
        return cls(clean, add_gaussian_noise(clean, NoiseModel(noise.sigma, seed, noise.clip)))


def restore(model, images: np.ndarray, batch: int = 8) -> np.ndarray:
    outs = []
    with no_grad():
        for i in range(0, len(images), batch):
            outs.append(model.restore(Tensor(images[i:i + batch].astype(np.float32))).data)
    return np.concatenate(outs)


def evaluate(model, ev: EvalSet) -> tuple[float, float]:
    """(PSNR of the noisy inputs, PSNR of the restored outputs), per-image means."""
    return batch_psnr(ev.noisy, ev.clean), batch_psnr(restore(model, ev.noisy), ev.clean)


@dataclass
class TrainResult:
    model: object
    log: list[tuple[int, float, float, float]]


def train(model, plan: TrainPlan, data: ImagePool, noise: NoiseModel,
          eval_set: EvalSet | None = None, log_path: str | os.PathLike | None = None) -> TrainResult:
    """Minimise negative PSNR with AdamW under a cosine learning-rate schedule.

    Logs (iteration, lr, training loss, held-out PSNR) every ``eval_every``
    iterations and after the last one.
    """
    rng = np.random.default_rng(plan.seed)
    params = model.parameters()
    opt = AdamW(params, lr=plan.lr_start, betas=(plan.beta1, plan.beta2), eps=plan.eps,
                weight_decay=plan.weight_decay)
    sched = plan.lr_schedule
    log: list[tuple[int, float, float, float]] = []
    log_fh = open(log_path, "a") if log_path is not None else None
    try:
        for t in range(plan.iters):
            lr = cosine_lr(t, sched)
            clean = data.sample(rng, plan.batch, plan.patch_at(t))
            noisy = add_gaussian_noise(clean, noise, rng)
            try:
                out = model(Tensor(noisy))
                heads = out.shape[1]
                loss = neg_psnr_loss(out[:, 0], clean)
                for k in range(1, heads):
                    loss = loss + neg_psnr_loss(out[:, k], clean)
                if heads > 1:
                    loss = loss / heads
                opt.zero_grad()
                loss.backward()
                if plan.grad_clip:
                    clip_grad_norm(params, plan.grad_clip)
                opt.state.lr = lr
                opt.step()
            except NonFiniteError as exc:
                raise NonFiniteError(f"training diverged at iteration {t} (lr={lr:.3g}): {exc}") from exc

            done = t + 1
            if done % plan.eval_every == 0 or done == plan.iters:
                val = evaluate(model, eval_set)[1] if eval_set is not None else float("nan")
                row = (done, lr, loss.item(), val)
                log.append(row)
                logger.info("iter %d lr %.3g loss %.4f eval %.3f", *row)
                if log_fh is not None:
                    log_fh.write("\t".join([str(done), repr(lr), repr(row[2]), repr(val)]) + "\n")
                    log_fh.flush()
    finally:
        if log_fh is not None:
            log_fh.close()
    return TrainResult(model, log)
