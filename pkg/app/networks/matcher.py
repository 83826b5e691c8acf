"""Matcher estéreo recorrente simplificado.

Correlação all-pairs em uma única escala, amostragem em janela ao redor da
disparidade corrente, ConvGRU em uma resolução e upsampling bilinear ×s.
Convenção: disparidade positiva, feature direita amostrada em x − d.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from app.core.errors import ShapeError
from app.networks.base import Conv2d, Module
from app.networks.extractor import FeatureExtractor
from app.tensor import Tensor, as_tensor, note_branch, record
from app.tensor import ops
from app.tensor.tensor import Array


# ----------------- CORRELAÇÃO -----------------
def build_correlation(left: Tensor, right: Tensor, max_disp: int) -> Tensor:
    """vol[y, x, d] = ⟨L(y, x), R(y, x − d)⟩ / √C, d ∈ [0, max_disp].

    Zero quando x − d < 0.
    """
    if left.shape != right.shape or left.ndim != 3:
        raise ShapeError(f"features esquerda/direita incompatíveis: {left.shape} vs {right.shape}")
    h, w, c = left.shape
    if not 0 <= max_disp < w:
        raise ShapeError(f"max_disp {max_disp} deve estar em [0, W={w})")
    scale = 1.0 / np.sqrt(c)
    lf, rf = left.data, right.data
    vol = np.zeros((h, w, max_disp + 1), dtype=np.result_type(lf, rf))
    for d in range(max_disp + 1):
        vol[:, d:, d] = np.einsum("ywc,ywc->yw", lf[:, d:], rf[:, : w - d]) * scale

    def vjp(g: Array) -> tuple[Array, Array]:
        gl = np.zeros_like(lf)
        gr = np.zeros_like(rf)
        for d in range(max_disp + 1):
            gd = g[:, d:, d, None] * scale
            gl[:, d:] += gd * rf[:, : w - d]
            gr[:, : w - d] += gd * lf[:, d:]
        return gl, gr

    return record("correlation", vol, (left, right), vjp)


def window_lookup(volume: Tensor, disp: Tensor, radius: int) -> Tensor:
    """Amostra o volume por interpolação linear em d + k, k ∈ [−r, r].

    Amostras fora de [0, D] valem 0. Diferenciável no volume e na posição.
    """
    h, w, levels = volume.shape
    if disp.shape != (h, w, 1):
        raise ShapeError(f"disparidade deve ser {h}×{w}×1, recebeu {disp.shape}")
    offsets = np.arange(-radius, radius + 1, dtype=disp.dtype)
    pos = disp.data + offsets  # H×W×(2r+1)
    i0 = np.floor(pos).astype(np.int64)
    note_branch(i0)
    i1 = i0 + 1
    frac = (pos - i0).astype(volume.dtype)
    ok0 = (i0 >= 0) & (i0 < levels)
    ok1 = (i1 >= 0) & (i1 < levels)
    vol = volume.data

    def gather(idx: np.ndarray, ok: np.ndarray) -> Array:
        picked = np.take_along_axis(vol, np.clip(idx, 0, levels - 1), axis=2)
        return np.where(ok, picked, 0.0)

    v0, v1 = gather(i0, ok0), gather(i1, ok1)
    out = (1.0 - frac) * v0 + frac * v1

    def vjp(g: Array) -> tuple[Array, Array]:
        gv = np.zeros_like(vol)
        ys, xs = np.indices(i0.shape[:2])
        ys = np.broadcast_to(ys[..., None], i0.shape)
        xs = np.broadcast_to(xs[..., None], i0.shape)
        np.add.at(gv, (ys[ok0], xs[ok0], i0[ok0]), (g * (1.0 - frac))[ok0])
        np.add.at(gv, (ys[ok1], xs[ok1], i1[ok1]), (g * frac)[ok1])
        gd = (g * (v1 - v0)).sum(axis=2, keepdims=True)
        return gv, gd

    return record("window_lookup", out, (volume, disp), vjp)


# ----------------- ATUALIZAÇÃO RECORRENTE -----------------
class ConvGRU(Module):
    def __init__(self, hidden_dim: int, input_dim: int, rng: np.random.Generator) -> None:
        self.convz = Conv2d(hidden_dim + input_dim, hidden_dim, 3, rng, gain=1.0)
        self.convr = Conv2d(hidden_dim + input_dim, hidden_dim, 3, rng, gain=1.0)
        self.convq = Conv2d(hidden_dim + input_dim, hidden_dim, 3, rng, gain=1.0)

    def __call__(self, h: Tensor, x: Tensor) -> Tensor:
        hx = ops.concat([h, x], axis=-1)
        z = self.convz(hx).sigmoid()
        r = self.convr(hx).sigmoid()
        q = self.convq(ops.concat([r * h, x], axis=-1)).tanh()
        return (1.0 - z) * h + z * q


class UpdateBlock(Module):
    """GRU sobre [janela de correlação, disparidade, contexto] + cabeça Δd."""

    def __init__(self, channels: int, radius: int, rng: np.random.Generator) -> None:
        input_dim = (2 * radius + 1) + 1 + channels
        self.gru = ConvGRU(channels, input_dim, rng)
        self.disp_head = Conv2d(channels, 1, 3, rng, gain=0.01)

    def __call__(
        self, hidden: Tensor, context: Tensor, corr_slice: Tensor, d_current: Tensor
    ) -> tuple[Tensor, Tensor]:
        x = ops.concat([corr_slice, d_current, context], axis=-1)
        hidden = self.gru(hidden, x)
        return hidden, self.disp_head(hidden)


# ----------------- PREDIÇÃO -----------------
@dataclass
class DisparitySequence:
    """d̂₁..d̂_N em resolução cheia + estado oculto final."""

    preds: list[Tensor]
    hidden: Tensor

    def __len__(self) -> int:
        return len(self.preds)

    @property
    def final(self) -> Tensor:
        return self.preds[-1]


class StereoMatcher(Module):
    def __init__(
        self,
        rng: np.random.Generator,
        *,
        channels: int = 32,
        downsample: int = 4,
        max_disp: int = 8,
        radius: int = 3,
        iters: int = 6,
    ) -> None:
        self.extractor = FeatureExtractor(rng, channels=channels, downsample=downsample)
        self.update = UpdateBlock(channels, radius, rng)
        self._max_disp = max_disp
        self._radius = radius
        self._iters = iters

    @property
    def downsample(self) -> int:
        return self.extractor.downsample

    @property
    def max_disp(self) -> int:
        return self._max_disp

    @property
    def iters(self) -> int:
        return self._iters

    def extract_features(self, image: Tensor | np.ndarray) -> Tensor:
        return self.extractor(image)

    def predict(
        self,
        left: Tensor | np.ndarray,
        right: Tensor | np.ndarray,
        features_override: tuple[Tensor, Tensor] | None = None,
        iters: int | None = None,
    ) -> DisparitySequence:
        """Refinamento iterativo a partir de d₀ ≡ 0.

        `features_override` substitui a saída do extrator (features
        convertidas ou fundidas); as imagens definem a resolução de saída.
        """
        n = self._iters if iters is None else iters
        if n < 1:
            raise ShapeError(f"número de iterações deve ser >= 1, recebeu {n}")
        lt, rt = as_tensor(left), as_tensor(right)
        if lt.shape != rt.shape:
            raise ShapeError(f"par estéreo com tamanhos diferentes: {lt.shape} vs {rt.shape}")
        h, w = lt.shape[:2]
        s = self.downsample

        if features_override is None:
            fl, fr = self.extract_features(lt), self.extract_features(rt)
        else:
            fl, fr = features_override
        if fl.shape[:2] != (h // s, w // s):
            raise ShapeError(f"features {fl.shape} incompatíveis com imagem {h}×{w} e fator {s}")

        volume = build_correlation(fl, fr, self._max_disp)
        hidden = fl.tanh()
        disp = Tensor(np.zeros((h // s, w // s, 1)), dtype=fl.dtype)
        preds: list[Tensor] = []
        for _ in range(n):
            corr = window_lookup(volume, disp, self._radius)
            hidden, delta = self.update(hidden, fl, corr, disp)
            disp = disp + delta
            full = ops.upsample_bilinear(disp, s) * float(s)
            preds.append(full.reshape(h, w))
        return DisparitySequence(preds=preds, hidden=hidden)
