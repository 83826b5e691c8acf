"""Síntese física de névoa: espalhamento atmosférico + transmissão de Beer-Lambert.

    I(x) = J(x)·T(Z_x) + L∞·(1 − T(Z_x)),   T(Z) = exp(−β·Z)   (β constante)
"""
from __future__ import annotations

import logging
from typing import Any

import numpy as np
from numpy.typing import NDArray

from app.core.errors import ConfigError, ShapeError
from app.schemas.scene import CameraRig, DepthMap, DisparityMap, FogParams, Image

logger = logging.getLogger("cfdstereo.fog")

D_MIN = 0.1  # px; abaixo disso a disparidade é tratada como inválida
T_FLOOR = 1e-6


def disparity_to_depth(disp: DisparityMap, rig: CameraRig, d_min: float = D_MIN) -> DepthMap:
    """Z = f·B/d nos pixels com d > d_min; os demais ficam inválidos (sem exceção)."""
    if rig.focal_px <= 0 or rig.baseline_m <= 0:
        raise ConfigError(f"focal e baseline devem ser positivos: {rig}")
    d = np.asarray(disp, dtype=np.float64)
    if d.ndim != 2:
        raise ShapeError(f"disparidade deve ser H×W, recebeu {d.shape}")
    valid = np.isfinite(d) & (d > d_min)
    values = np.ones_like(d)
    values[valid] = rig.focal_px * rig.baseline_m / d[valid]
    return DepthMap(values=values, valid_mask=valid)


def depth_to_disparity(depth: DepthMap, rig: CameraRig) -> DisparityMap:
    """Inversa de `disparity_to_depth`; pixels inválidos viram 0."""
    out = np.zeros(depth.shape, dtype=np.float64)
    out[depth.valid_mask] = rig.focal_px * rig.baseline_m / depth.values[depth.valid_mask]
    return out


def transmission(
    depth: DepthMap,
    beta: float,
    fallback_depth: float | None = None,
) -> NDArray[np.floating[Any]]:
    """T = exp(−β·Z) ∈ (0,1].

    Pixels inválidos usam `fallback_depth` (padrão: maior profundidade válida
    do quadro; quadro sem pixel válido recebe T = 1).
    """
    if beta < 0:
        raise ConfigError(f"beta deve ser >= 0, recebeu {beta}")
    z = depth.values.copy()
    if not depth.valid_mask.all():
        if fallback_depth is None:
            fallback_depth = float(z[depth.valid_mask].max()) if depth.valid_mask.any() else 0.0
        z[~depth.valid_mask] = fallback_depth
    return np.exp(-beta * z)


def _check_image(image: Image, depth: DepthMap) -> NDArray[np.floating[Any]]:
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 3 or img.shape[:2] != depth.shape:
        raise ShapeError(f"imagem {img.shape} incompatível com profundidade {depth.shape}")
    return img


def render_fog(
    clean: Image,
    depth: DepthMap,
    fog: FogParams,
    fallback_depth: float | None = None,
) -> Image:
    """Aplica a equação de espalhamento; a saída é combinação convexa de J e L∞."""
    j = _check_image(clean, depth)
    airlight = np.asarray(fog.airlight, dtype=np.float64)[: j.shape[2]]
    t = transmission(depth, fog.beta, fallback_depth)[..., None]
    foggy = j * t + airlight * (1.0 - t)
    return np.clip(foggy, 0.0, 1.0)


def dehaze_oracle(
    foggy: Image,
    depth: DepthMap,
    fog: FogParams,
    t_floor: float = T_FLOOR,
    fallback_depth: float | None = None,
) -> tuple[Image, NDArray[np.bool_]]:
    """Inversa analítica J = (I − L∞(1−T))/T, usada para testar o renderizador.

    Retorna (J, reliable); pixels com T < t_floor ficam marcados como não
    confiáveis e recebem L∞.
    """
    i = _check_image(foggy, depth)
    airlight = np.asarray(fog.airlight, dtype=np.float64)[: i.shape[2]]
    t = transmission(depth, fog.beta, fallback_depth)
    reliable = t >= t_floor
    safe_t = np.where(reliable, t, 1.0)[..., None]
    clean = (i - airlight * (1.0 - safe_t)) / safe_t
    clean = np.where(reliable[..., None], clean, airlight)
    return clean, reliable


def render_pair(
    left: Image,
    right: Image,
    disp_left: DisparityMap,
    disp_right: DisparityMap,
    rig: CameraRig,
    fog: FogParams,
    fallback_depth: float | None = None,
) -> tuple[Image, Image]:
    """Renderiza cada vista com a própria profundidade (espalhamento é por ponto de vista)."""
    depth_l = disparity_to_depth(disp_left, rig)
    depth_r = disparity_to_depth(disp_right, rig)
    return (
        render_fog(left, depth_l, fog, fallback_depth),
        render_fog(right, depth_r, fog, fallback_depth),
    )


def sample_fog(
    rng: np.random.Generator,
    beta_range: tuple[float, float],
    airlight_range: tuple[float, float],
) -> FogParams:
    """β ~ U[beta_range], L∞ ~ U[airlight_range] em tons de cinza."""
    beta = float(rng.uniform(*beta_range))
    airlight = float(rng.uniform(*airlight_range))
    return FogParams(beta=beta, airlight=airlight)
