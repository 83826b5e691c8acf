"""Conversor atento de features: bloco residual com atenção por pixel e por canal.

    F' = F + Conv(F)                      (ou F' = F com attention_input="input")
    PA = σ(Conv3×3(F'))                   H×W×1
    CA = σ(Conv1×1(avgpool(F')))          1×1×C
    F̃  = F + (F + Conv(F)) ⊙ PA ⊙ CA
"""
from __future__ import annotations

from typing import Literal

import numpy as np

from app.core.errors import ShapeError
from app.networks.base import Conv2d, Module
from app.tensor import Tensor
from app.tensor import ops

AttentionInput = Literal["branch", "input"]


class FeatureConverter(Module):
    def __init__(
        self,
        channels: int,
        rng: np.random.Generator,
        attention_input: AttentionInput = "branch",
    ) -> None:
        self.pre_conv = Conv2d(channels, channels, 3, rng, gain=1.0)
        self.pa_conv = Conv2d(channels, 1, 3, rng, gain=1.0)
        self.ca_conv = Conv2d(channels, channels, 1, rng, gain=1.0)
        self._attention_input = attention_input

    @property
    def attention_input(self) -> AttentionInput:
        return self._attention_input

    def pixel_attention(self, f_prime: Tensor) -> Tensor:
        return self.pa_conv(f_prime).sigmoid()

    def channel_attention(self, f_prime: Tensor) -> Tensor:
        return self.ca_conv(ops.global_avg_pool(f_prime)).sigmoid()

    def __call__(self, f: Tensor) -> Tensor:
        if f.ndim != 3 or f.shape[2] != self.pre_conv.in_channels:
            raise ShapeError(
                f"conversor espera H×W×{self.pre_conv.in_channels}, recebeu {f.shape}"
            )
        branch = f + self.pre_conv(f)
        f_prime = branch if self._attention_input == "branch" else f
        return f + branch * self.pixel_attention(f_prime) * self.channel_attention(f_prime)

    convert = __call__
