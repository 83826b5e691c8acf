"""Métricas de disparidade (EPE, P1, 3px, D1) e de profundidade (RMSE … δ₃)."""
from __future__ import annotations

from collections.abc import Sequence
from typing import Any

import numpy as np
from numpy.typing import NDArray

from app.core.errors import NumericError, ShapeError
from app.schemas.metrics import DepthEval, StereoEval
from app.schemas.scene import CameraRig, DepthMap, DisparityMap
from app.services.fog_service import disparity_to_depth

P1_THRESHOLD = 1.0
PX3_THRESHOLD = 3.0
D1_RELATIVE = 0.05
DELTA_BASE = 1.25


def _mask(shape: tuple[int, ...], mask: NDArray[Any] | None) -> NDArray[np.bool_]:
    m = np.ones(shape, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    if m.shape != shape:
        raise ShapeError(f"máscara {m.shape} incompatível com mapa {shape}")
    if not m.any():
        raise NumericError("máscara de avaliação vazia")
    return m


# ----------------- DISPARIDADE -----------------
def stereo_eval(
    pred: DisparityMap, gt: DisparityMap, mask: NDArray[Any] | None = None
) -> StereoEval:
    """Métricas sobre os pixels válidos; todas as desigualdades são estritas."""
    p = np.asarray(pred, dtype=np.float64)
    g = np.asarray(gt, dtype=np.float64)
    if p.shape != g.shape:
        raise ShapeError(f"predição {p.shape} e gt {g.shape} com tamanhos diferentes")
    m = _mask(g.shape, mask)
    err = np.abs(p[m] - g[m])
    return StereoEval(
        epe=float(err.mean()),
        p1=float(np.mean(err > P1_THRESHOLD)),
        px3=float(np.mean(err > PX3_THRESHOLD)),
        d1=float(np.mean((err > PX3_THRESHOLD) & (err > D1_RELATIVE * np.abs(g[m])))),
    )


# ----------------- PROFUNDIDADE -----------------
def depth_eval(
    pred: DepthMap | NDArray[Any], gt: DepthMap | NDArray[Any], mask: NDArray[Any] | None = None
) -> DepthEval:
    """RMSE/MAE em metros, SRD = (Ẑ−Z)²/Z, ARD = |Ẑ−Z|/Z.

    SILog = 100·√Var(log Ẑ − log Z).
    """
    pz = pred.values if isinstance(pred, DepthMap) else np.asarray(pred, dtype=np.float64)
    gz = gt.values if isinstance(gt, DepthMap) else np.asarray(gt, dtype=np.float64)
    if pz.shape != gz.shape:
        raise ShapeError(f"profundidades com tamanhos diferentes: {pz.shape} vs {gz.shape}")
    m = _mask(gz.shape, mask)
    if isinstance(gt, DepthMap):
        m = m & gt.valid_mask
    if isinstance(pred, DepthMap):
        m = m & pred.valid_mask
    if not m.any():
        raise NumericError("nenhum pixel com profundidade válida na máscara")
    zp, zg = pz[m], gz[m]
    if np.any(zp <= 0) or np.any(zg <= 0) or not np.all(np.isfinite(zp) & np.isfinite(zg)):
        raise NumericError("profundidades devem ser finitas e positivas na máscara")

    diff = zp - zg
    log_diff = np.log(zp) - np.log(zg)
    ratio = np.maximum(zp / zg, zg / zp)
    # Var(d) na forma centrada
    variance = float(np.mean((log_diff - log_diff.mean()) ** 2))
    return DepthEval(
        rmse=float(np.sqrt(np.mean(diff**2))),
        mae=float(np.mean(np.abs(diff))),
        srd=float(np.mean(diff**2 / zg)),
        ard=float(np.mean(np.abs(diff) / zg)),
        silog=100.0 * float(np.sqrt(variance)),
        delta1=float(np.mean(ratio < DELTA_BASE)),
        delta2=float(np.mean(ratio < DELTA_BASE**2)),
        delta3=float(np.mean(ratio < DELTA_BASE**3)),
    )


def disparity_depth_bridge(
    pred_disp: DisparityMap,
    gt_depth: DepthMap,
    rig: CameraRig,
    mask: NDArray[Any] | None = None,
) -> DepthEval:
    """Converte a disparidade predita pela câmera e avalia em profundidade.

    Pixels com disparidade predita inválida ficam fora de todas as médias.
    """
    pred_depth = disparity_to_depth(pred_disp, rig)
    return depth_eval(pred_depth, gt_depth, mask)


def mean_stereo_eval(evals: Sequence[StereoEval]) -> StereoEval:
    if not evals:
        raise NumericError("nenhuma avaliação para agregar")
    return StereoEval(
        epe=float(np.mean([e.epe for e in evals])),
        p1=float(np.mean([e.p1 for e in evals])),
        px3=float(np.mean([e.px3 for e in evals])),
        d1=float(np.mean([e.d1 for e in evals])),
    )


def mean_depth_eval(evals: Sequence[DepthEval]) -> DepthEval:
    if not evals:
        raise NumericError("nenhuma avaliação para agregar")
    fields = DepthEval.model_fields
    return DepthEval(**{k: float(np.mean([getattr(e, k) for e in evals])) for k in fields})
