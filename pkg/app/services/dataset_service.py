"""Estereogramas sintéticos de pontos aleatórios com camadas fronto-paralelas.

A vista esquerda mostra, em cada pixel, a camada mais próxima cuja máscara
cobre o pixel. A vista direita amostra cada camada em x + d_j, de modo que
right(y, x − d) == left(y, x) em todo pixel não ocluído.
"""
from __future__ import annotations

import logging
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
from numpy.typing import NDArray

from app.core.config import settings
from app.core.errors import ConfigError
from app.repositories.dataset_repo import DatasetRepository
from app.schemas.experiment import DataConfig, ExperimentConfig, FogConfig
from app.schemas.scene import CameraRig, SampleRecord, StereoScene
from app.services.fog_service import render_pair, sample_fog

logger = logging.getLogger("cfdstereo.data")


# ----------------- GERAÇÃO -----------------
def _layer_masks(
    rng: np.random.Generator, n_layers: int, height: int, width: int, pad: int
) -> list[tuple[NDArray[np.bool_], tuple[int, int, int, int]]]:
    """Fundo (máscara cheia) + retângulos dentro do quadro, do mais distante ao mais próximo."""
    full = np.ones((height, width + pad), dtype=bool)
    layers = [(full, (0, height, 0, width + pad))]
    for _ in range(n_layers - 1):
        h = int(rng.integers(max(2, height // 4), max(3, height // 2) + 1))
        w = int(rng.integers(max(2, width // 8), max(3, width // 3) + 1))
        y0 = int(rng.integers(0, height - h + 1))
        x0 = int(rng.integers(0, width - w + 1))
        mask = np.zeros_like(full)
        mask[y0 : y0 + h, x0 : x0 + w] = True
        layers.append((mask, (y0, y0 + h, x0, x0 + w)))
    return layers


def _compose(
    masks: Sequence[NDArray[np.bool_]], shifts: Sequence[int], width: int
) -> NDArray[np.int64]:
    """Índice da camada visível por pixel; camadas posteriores ficam na frente."""
    height = masks[0].shape[0]
    layer = np.zeros((height, width), dtype=np.int64)
    cols = np.arange(width)
    for j, (mask, shift) in enumerate(zip(masks, shifts)):
        layer[mask[:, cols + shift]] = j
    return layer


def generate_scene(
    rng: np.random.Generator,
    name: str,
    height: int,
    width: int,
    disp_range: tuple[int, int],
    rig: CameraRig,
    *,
    layers: tuple[int, int] = (2, 4),
    fog: FogConfig | None = None,
) -> StereoScene:
    lo, hi = disp_range
    n_layers = int(rng.integers(layers[0], layers[1] + 1))
    candidates = np.arange(lo, hi + 1)
    n_layers = min(n_layers, candidates.size)
    disps = np.sort(rng.choice(candidates, size=n_layers, replace=False)).astype(np.int64)
    pad = int(hi)

    layer_defs = _layer_masks(rng, n_layers, height, width, pad)
    masks = [m for m, _ in layer_defs]
    textures = [rng.random((height, width + pad, 3)) for _ in range(n_layers)]

    left_layer = _compose(masks, [0] * n_layers, width)
    right_layer = _compose(masks, disps.tolist(), width)

    rows, cols = np.indices((height, width))
    left = np.zeros((height, width, 3))
    right = np.zeros((height, width, 3))
    for j, tex in enumerate(textures):
        on_left = left_layer == j
        left[on_left] = tex[rows[on_left], cols[on_left]]
        on_right = right_layer == j
        right[on_right] = tex[rows[on_right], cols[on_right] + disps[j]]

    disp_left = disps[left_layer].astype(np.float64)
    disp_right = disps[right_layer].astype(np.float64)

    # ocluído: cai fora do quadro direito ou outra camada o cobre na vista direita
    target = cols - disp_left.astype(np.int64)
    inside = target >= 0
    occluded = ~inside
    occluded[inside] = right_layer[rows[inside], target[inside]] != left_layer[inside]

    fog_cfg = fog or FogConfig()
    fog_params = sample_fog(rng, fog_cfg.beta_range, fog_cfg.airlight_range)
    fog_left, fog_right = render_pair(
        left, right, disp_left, disp_right, rig, fog_params, fog_cfg.fallback_depth
    )
    return StereoScene(
        name=name,
        clean_left=left,
        clean_right=right,
        disp_left=disp_left,
        disp_right=disp_right,
        valid_left=disp_left > 0,
        rig=rig,
        fog=fog_params,
        fog_left=fog_left,
        fog_right=fog_right,
        occluded_left=occluded,
        meta={"layers": [(int(d), box) for d, (_, box) in zip(disps, layer_defs)]},
    )


def generate_synthetic_dataset(
    seed: int,
    n_scenes: int,
    size: tuple[int, int],
    disp_range: tuple[int, int],
    rig: CameraRig,
    *,
    layers: tuple[int, int] = (2, 4),
    fog: FogConfig | None = None,
    workers: int | None = None,
) -> list[StereoScene]:
    """Cenas independentes, cada uma com RNG próprio derivado de `seed`."""
    height, width = size
    lo, hi = disp_range
    if lo < 0 or lo > hi:
        raise ConfigError(f"disp_range inválido: {disp_range}")
    if hi * 4 >= width:
        raise ConfigError(f"disparidade máxima {hi} deve ser menor que W/4 = {width / 4}")
    if layers[0] < 1 or layers[0] > layers[1]:
        raise ConfigError(f"intervalo de camadas inválido: {layers}")

    children = np.random.SeedSequence(seed).spawn(n_scenes)

    def build(i: int) -> StereoScene:
        rng = np.random.default_rng(children[i])
        return generate_scene(
            rng, f"scene_{i:04d}", height, width, disp_range, rig, layers=layers, fog=fog
        )

    with ThreadPoolExecutor(max_workers=workers or settings.NUM_WORKERS) as pool:
        scenes = list(pool.map(build, range(n_scenes)))
    logger.info("geradas %d cenas %d×%d (seed=%d)", n_scenes, height, width, seed)
    return scenes


# ----------------- SERVIÇO -----------------
class DatasetService:
    """Gera, grava, carrega e divide o conjunto de cenas de um experimento."""

    def __init__(self, repo: DatasetRepository | None = None) -> None:
        self.repo = repo or DatasetRepository()

    def synthesize(self, config: ExperimentConfig) -> list[StereoScene]:
        d: DataConfig = config.data
        return generate_synthetic_dataset(
            config.seed,
            d.n_scenes,
            (d.height, d.width),
            d.disp_range,
            d.rig,
            layers=d.layers,
            fog=config.fog,
        )

    def write(self, scenes: Sequence[StereoScene], directory: str | Path) -> list[SampleRecord]:
        return self.repo.save(directory, scenes)

    def load(self, config: ExperimentConfig) -> list[StereoScene]:
        if config.data.source == "directory":
            assert config.data.directory is not None
            return self.repo.load(config.data.directory, fog=config.fog)
        return self.synthesize(config)

    @staticmethod
    def split(
        scenes: Sequence[StereoScene], eval_fraction: float
    ) -> tuple[list[StereoScene], list[StereoScene]]:
        """Últimas cenas formam o conjunto de avaliação (ao menos uma de cada lado)."""
        if len(scenes) < 2:
            raise ConfigError("são necessárias ao menos duas cenas para treino e avaliação")
        n_eval = min(len(scenes) - 1, max(1, round(len(scenes) * eval_fraction)))
        return list(scenes[:-n_eval]), list(scenes[-n_eval:])
