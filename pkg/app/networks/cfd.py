"""Modelos professor (fusão limpo + névoa) e aluno (domínio único)."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from app.core.errors import ShapeError
from app.networks.base import Module
from app.networks.converter import FeatureConverter
from app.networks.matcher import DisparitySequence, StereoMatcher
from app.schemas.experiment import ModelConfig
from app.schemas.scene import Image
from app.tensor import Tensor, as_tensor

ModelKind = Literal["teacher", "student"]
Pair = tuple[Image, Image]


@dataclass
class TeacherOutput:
    seq: DisparitySequence
    fused_left: Tensor
    fused_right: Tensor


@dataclass
class StudentOutput:
    """Saída do aluno para um domínio: F (extrator) e F̃ (conversor) por vista."""

    seq: DisparitySequence
    raw_left: Tensor
    raw_right: Tensor
    converted_left: Tensor
    converted_right: Tensor


class _CFDModel(Module):
    kind: ModelKind

    def __init__(self, config: ModelConfig, rng: np.random.Generator) -> None:
        self.matcher = StereoMatcher(
            rng,
            channels=config.channels,
            downsample=config.downsample,
            max_disp=config.max_disp,
            radius=config.radius,
            iters=config.iters,
        )
        self.converter = FeatureConverter(config.channels, rng, config.attention_input)

    def features(self, image: Image | Tensor) -> tuple[Tensor, Tensor]:
        """(F, F̃) de uma imagem: extrator compartilhado seguido do conversor."""
        raw = self.matcher.extract_features(image)
        return raw, self.converter(raw)


class TeacherModel(_CFDModel):
    """Um extrator e um conversor aplicados aos dois domínios; soma as features convertidas."""

    kind: ModelKind = "teacher"

    def fuse(self, clean: Image | Tensor, fog: Image | Tensor) -> Tensor:
        _, converted_clean = self.features(clean)
        _, converted_fog = self.features(fog)
        return converted_clean + converted_fog

    def forward(self, clean_pair: Pair, fog_pair: Pair, iters: int | None = None) -> TeacherOutput:
        shapes = {np.shape(img) for img in (*clean_pair, *fog_pair)}
        if len(shapes) != 1:
            raise ShapeError(f"professor exige quatro imagens do mesmo tamanho, recebeu {shapes}")
        fused_left = self.fuse(clean_pair[0], fog_pair[0])
        fused_right = self.fuse(clean_pair[1], fog_pair[1])
        seq = self.matcher.predict(
            as_tensor(clean_pair[0]),
            as_tensor(clean_pair[1]),
            features_override=(fused_left, fused_right),
            iters=iters,
        )
        return TeacherOutput(seq=seq, fused_left=fused_left, fused_right=fused_right)

    __call__ = forward


class StudentModel(_CFDModel):
    """Aceita um par de um único domínio; prediz a partir de F̃."""

    kind: ModelKind = "student"

    def forward(self, pair: Pair, iters: int | None = None) -> StudentOutput:
        left, right = pair
        raw_l, conv_l = self.features(left)
        raw_r, conv_r = self.features(right)
        seq = self.matcher.predict(left, right, features_override=(conv_l, conv_r), iters=iters)
        return StudentOutput(seq, raw_l, raw_r, conv_l, conv_r)

    __call__ = forward


def build_model(
    kind: ModelKind, config: ModelConfig, seed: int | np.random.Generator
) -> TeacherModel | StudentModel:
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    cls = TeacherModel if kind == "teacher" else StudentModel
    return cls(config, rng)
