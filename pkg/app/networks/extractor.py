"""Extrator de features com pesos compartilhados entre vistas e domínios."""
from __future__ import annotations

import math

import numpy as np

from app.core.errors import ShapeError
from app.networks.base import Conv2d, Module
from app.tensor import Tensor, as_tensor
from app.tensor import ops


class FeatureExtractor(Module):
    """Quatro convoluções 3×3; a resolução cai ×2 por pooling após as primeiras log2(s).

    As três primeiras camadas usam ReLU, a última é linear.
    """

    def __init__(
        self,
        rng: np.random.Generator,
        channels: int = 32,
        downsample: int = 4,
        in_channels: int = 3,
    ) -> None:
        if downsample not in (1, 2, 4, 8):
            raise ShapeError(f"downsample deve ser 1, 2, 4 ou 8, recebeu {downsample}")
        self.convs = [
            Conv2d(in_channels, channels, 3, rng),
            Conv2d(channels, channels, 3, rng),
            Conv2d(channels, channels, 3, rng),
            Conv2d(channels, channels, 3, rng, gain=1.0),
        ]
        self._downsample = downsample
        self._pools = int(math.log2(downsample))

    @property
    def downsample(self) -> int:
        return self._downsample

    @property
    def channels(self) -> int:
        return self.convs[-1].out_channels

    def __call__(self, image: Tensor | np.ndarray) -> Tensor:
        x = as_tensor(image)
        if x.ndim != 3:
            raise ShapeError(f"imagem deve ser H×W×C, recebeu {x.shape}")
        h, w = x.shape[:2]
        s = self._downsample
        if h % s or w % s:
            raise ShapeError(
                f"imagem {h}×{w} não divisível pelo fator {s}; "
                f"aplique padding até {math.ceil(h / s) * s}×{math.ceil(w / s) * s}"
            )
        for i, conv in enumerate(self.convs):
            x = conv(x)
            if i < len(self.convs) - 1:
                x = x.relu()
            if i < self._pools:
                x = ops.avg_pool2d(x, 2)
        return x
