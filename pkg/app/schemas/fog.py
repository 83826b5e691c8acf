from __future__ import annotations

from typing import List, Optional

from pydantic import BaseModel, Field

from app.schemas.scene import CameraRig, FogParams

Grid = List[List[float]]  # H×W
ImageGrid = List[List[List[float]]]  # H×W×3


# ----------------- RENDER -----------------
class FogRenderRequest(BaseModel):
    """Imagem limpa + disparidade exata; a profundidade vem da câmera."""

    image: ImageGrid
    disparity: Grid
    rig: CameraRig = CameraRig()
    fog: FogParams
    fallback_depth: Optional[float] = Field(None, gt=0)


class FogRenderResponse(BaseModel):
    image: ImageGrid


# ----------------- TRANSMISSÃO -----------------
class TransmissionRequest(BaseModel):
    disparity: Grid
    rig: CameraRig = CameraRig()
    beta: float = Field(ge=0)
    fallback_depth: Optional[float] = Field(None, gt=0)


class TransmissionResponse(BaseModel):
    transmission: Grid
