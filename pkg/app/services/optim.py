"""Adam, recorte pela norma global e decaimento em degraus da taxa de aprendizado."""
from __future__ import annotations

import math
from collections.abc import Sequence

import numpy as np

from app.networks.base import Parameter
from app.schemas.experiment import OptimConfig


def step_lr(
    base_lr: float, step: int, total_steps: int, decay: float = 0.5, stages: int = 3
) -> float:
    """lr · decay^⌊stages · step / total⌋: cai pela metade a cada terço do treino."""
    if total_steps <= 0:
        return base_lr
    return base_lr * decay ** math.floor(stages * step / total_steps)


def clip_grad_norm(params: Sequence[Parameter], max_norm: float) -> float:
    """Reescala os gradientes para norma global <= max_norm; devolve a norma original."""
    grads = [p.grad for p in params if p.grad is not None]
    total = float(np.sqrt(sum(float(np.sum(g.astype(np.float64) ** 2)) for g in grads)))
    if max_norm > 0 and total > max_norm:
        scale = max_norm / (total + 1e-6)
        for p in params:
            if p.grad is not None:
                p.grad = p.grad * p.grad.dtype.type(scale)
    return total


class Adam:
    def __init__(
        self,
        params: Sequence[Parameter],
        lr: float = 4e-4,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
    ) -> None:
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self._m = [np.zeros_like(p.data) for p in self.params]
        self._v = [np.zeros_like(p.data) for p in self.params]

    @classmethod
    def from_config(cls, params: Sequence[Parameter], config: OptimConfig) -> "Adam":
        return cls(params, lr=config.lr, betas=(config.beta1, config.beta2), eps=config.eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def step(self, lr: float | None = None) -> None:
        lr = self.lr if lr is None else lr
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for p, m, v in zip(self.params, self._m, self._v):
            if p.grad is None:
                continue
            g = p.grad
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            update = lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
            p.data -= update.astype(p.dtype)
