# app/api/routes/fog.py
from __future__ import annotations

from fastapi import APIRouter

from app.api.routes._arrays import as_array
from app.schemas.fog import (
    FogRenderRequest,
    FogRenderResponse,
    TransmissionRequest,
    TransmissionResponse,
)
from app.services.fog_service import disparity_to_depth, render_fog, transmission

router = APIRouter(prefix="/fog", tags=["fog"])


@router.post("/render", response_model=FogRenderResponse, summary="Renderizar névoa")
def render(payload: FogRenderRequest) -> FogRenderResponse:
    """Aplica espalhamento atmosférico a uma imagem limpa usando Z = f·B/d."""
    image = as_array(payload.image, "image", 3)
    depth = disparity_to_depth(as_array(payload.disparity, "disparity", 2), payload.rig)
    foggy = render_fog(image, depth, payload.fog, payload.fallback_depth)
    return FogRenderResponse(image=foggy.tolist())


@router.post(
    "/transmission", response_model=TransmissionResponse, summary="Mapa de transmissão"
)
def transmission_map(payload: TransmissionRequest) -> TransmissionResponse:
    """T = exp(−β·Z) por pixel; pixels sem disparidade usam a profundidade de reserva."""
    depth = disparity_to_depth(as_array(payload.disparity, "disparity", 2), payload.rig)
    t = transmission(depth, payload.beta, payload.fallback_depth)
    return TransmissionResponse(transmission=t.tolist())
