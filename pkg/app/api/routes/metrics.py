# app/api/routes/metrics.py
from __future__ import annotations

import numpy as np
from fastapi import APIRouter

from app.api.routes._arrays import as_array
from app.schemas.metrics import DepthEval, MapPairRequest, StereoEval
from app.services.metrics_service import depth_eval, stereo_eval

router = APIRouter(prefix="/metrics", tags=["metrics"])


def _maps(payload: MapPairRequest) -> tuple[np.ndarray, np.ndarray, np.ndarray | None]:
    pred = as_array(payload.pred, "pred", 2)
    gt = as_array(payload.gt, "gt", 2)
    mask = None if payload.mask is None else as_array(payload.mask, "mask", 2, dtype=bool)
    return pred, gt, mask


@router.post("/stereo", response_model=StereoEval, summary="Métricas de disparidade")
def stereo(payload: MapPairRequest) -> StereoEval:
    """EPE, P1 (>1 px), 3px e D1 sobre os pixels da máscara (todos, se omitida)."""
    return stereo_eval(*_maps(payload))


@router.post("/depth", response_model=DepthEval, summary="Métricas de profundidade")
def depth(payload: MapPairRequest) -> DepthEval:
    """RMSE, MAE, SRD, ARD, SILog e δ₁..δ₃ entre profundidades em metros."""
    return depth_eval(*_maps(payload))
