"""Adam with an optional warmup + cosine-decay learning-rate schedule."""

from __future__ import annotations

import math

import numpy as np

from .numcore import Tensor


class Adam:
    """Adam over a name -> Tensor parameter dict.

    Defaults beta=(0.9, 0.999), eps=1e-8. State is float32 like the
    parameters; updates are skipped for parameters with no gradient.
    """

    def __init__(self, params: dict[str, Tensor], lr: float = 1e-3,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self._m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self._v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def step(self, lr: float | None = None):
        lr = self.lr if lr is None else lr
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for k, p in self.params.items():
            if p.grad is None:
                continue
            g = p.grad
            m = self._m[k]
            v = self._v[k]
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * (g * g)
            p.data -= (lr * (m / c1) / (np.sqrt(v / c2) + self.eps)).astype(np.float32)


def warmup_cosine_lr(step: int, total_steps: int, base_lr: float, warmup: int = 100) -> float:
    """Linear warmup to base_lr, then cosine decay to zero over the run."""
    if total_steps <= warmup:
        return base_lr * (step + 1) / max(1, total_steps)
    if step < warmup:
        return base_lr * (step + 1) / warmup
    progress = (step - warmup) / (total_steps - warmup)
    return base_lr * 0.5 * (1.0 + math.cos(math.pi * progress))
