"""AdamW with decoupled weight decay and a cosine-annealed learning rate."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .tensor import NonFiniteError, Tensor


@dataclass
class LrSchedule:
    lr_start: float = 1e-3
    lr_end: float = 1e-7
    total_iters: int = 1

    def __post_init__(self):
        if self.total_iters < 1:
            raise ValueError("total_iters must be positive")


def cosine_lr(t: int, sched: LrSchedule) -> float:
    if not 0 <= t <= sched.total_iters:
        raise ValueError(f"iteration {t} outside [0, {sched.total_iters}]")
    cos = math.cos(math.pi * t / sched.total_iters)
    return sched.lr_end + 0.5 * (sched.lr_start - sched.lr_end) * (1.0 + cos)


@dataclass
class AdamWState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.9
    eps: float = 1e-8
    weight_decay: float = 0.0
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        for name in ("beta1", "beta2"):
            b = getattr(self, name)
            if not 0.0 <= b < 1.0:
                raise ValueError(f"{name} must lie in [0, 1), got {b}")
        if self.step < 0:
            raise ValueError("step must be non-negative")


def adamw_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray | None],
               state: AdamWState) -> list[np.ndarray]:
    """One AdamW update. Returns new parameter arrays; moments live in ``state``."""
    if len(params) != len(grads):
        raise ValueError(f"{len(params)} params but {len(grads)} grads")
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    if len(state.m) != len(params):
        raise ValueError("optimizer state does not match the parameter list")

    state.step += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** state.step
    bc2 = 1.0 - b2 ** state.step
    out = []
    for i, (p, g) in enumerate(zip(params, grads)):
        if g is None:
            g = np.zeros_like(p)
        if g.shape != p.shape or state.m[i].shape != p.shape:
            raise ValueError(f"shape mismatch at param {i}: {p.shape} vs grad {g.shape}")
        if not np.all(np.isfinite(g)):
            raise NonFiniteError(f"non-finite gradient for param {i}")
        m = state.m[i] = b1 * state.m[i] + (1.0 - b1) * g
        v = state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g
        new = p * (1.0 - state.lr * state.weight_decay)
        new = new - state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
        out.append(new.astype(p.dtype))
    return out


def clip_grad_norm(params: Sequence[Tensor], max_norm: float) -> float:
    """Rescale grads in place so their global L2 norm is at most ``max_norm``."""
    grads = [p.grad for p in params if p.grad is not None]
    total = math.sqrt(sum(float(np.sum(g.astype(np.float64) ** 2)) for g in grads))
    if total > max_norm > 0:
        scale = max_norm / (total + 1e-12)
        for p in params:
            if p.grad is not None:
                p.grad = p.grad * scale
    return total


class AdamW:
    def __init__(self, params: Sequence[Tensor], lr: float = 1e-3, betas=(0.9, 0.9),
                 eps: float = 1e-8, weight_decay: float = 0.0):
        self.params = list(params)
        self.state = AdamWState(lr=lr, beta1=betas[0], beta2=betas[1], eps=eps,
                                weight_decay=weight_decay)

    def step(self) -> None:
        new = adamw_step([p.data for p in self.params], [p.grad for p in self.params], self.state)
        for p, arr in zip(self.params, new):
            p.data = arr

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None
