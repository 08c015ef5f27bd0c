"""AdamW with cosine-annealed learning rate."""
from __future__ import annotations

import math

import numpy as np

from .nn import ParamStore


def cosine_lr(step: int, total: int, lr: float, lr_min: float = 0.0, warmup: int = 0) -> float:
    if warmup and step < warmup:
        return lr * (step + 1) / warmup
    frac = min(1.0, (step - warmup) / max(1, total - warmup))
    return lr_min + 0.5 * (lr - lr_min) * (1.0 + math.cos(math.pi * frac))


class AdamW:
    """Adam with decoupled weight decay applied to matrices only."""

    def __init__(self, params: ParamStore, lr: float = 1e-3, weight_decay: float = 5e-3,
                 betas=(0.9, 0.999), eps: float = 1e-8, clip_norm: float | None = 1.0):
        self.params = params
        self.lr = lr
        self.weight_decay = weight_decay
        self.b1, self.b2 = betas
        self.eps = eps
        self.clip_norm = clip_norm
        self.m = {k: np.zeros_like(v) for k, v in params.arrays.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.arrays.items()}
        self.t = 0

    def step(self, grads: dict[str, np.ndarray], lr: float | None = None) -> float:
        """Apply one update; returns the pre-clip global gradient norm."""
        lr = self.lr if lr is None else lr
        norm = math.sqrt(sum(float((g * g).sum()) for g in grads.values()))
        scale = 1.0
        if self.clip_norm is not None and norm > self.clip_norm:
            scale = self.clip_norm / norm
        self.t += 1
        c1 = 1.0 - self.b1**self.t
        c2 = 1.0 - self.b2**self.t
        for k, g in grads.items():
            g = g * scale
            m = self.m[k] = self.b1 * self.m[k] + (1 - self.b1) * g
            v = self.v[k] = self.b2 * self.v[k] + (1 - self.b2) * g * g
            p = self.params.arrays[k]
            if p.ndim >= 2 and self.weight_decay:
                p *= 1.0 - lr * self.weight_decay
            p -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
        return norm
