from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np
from numpy.typing import NDArray
from pydantic import BaseModel, ConfigDict, Field, field_validator

from app.core.errors import NumericError, ShapeError

Image = NDArray[np.floating[Any]]  # H×W×3 em [0,1]
DisparityMap = NDArray[np.floating[Any]]  # H×W em pixels


# ----------------- CÂMERA / NÉVOA -----------------
class CameraRig(BaseModel):
    """Par estéreo retificado: Z = focal_px · baseline_m / d."""

    focal_px: float = Field(200.0, gt=0)
    baseline_m: float = Field(0.3, gt=0)

    model_config = ConfigDict(frozen=True)


class FogParams(BaseModel):
    """Névoa homogênea: coeficiente de atenuação β (1/m) e luz atmosférica L∞ por canal."""

    beta: float = Field(ge=0)
    airlight: tuple[float, float, float] = (0.85, 0.85, 0.85)

    model_config = ConfigDict(frozen=True)

    @field_validator("airlight", mode="before")
    @classmethod
    def _expand_gray(cls, v: Any) -> Any:
        # L∞ em tons de cinza vira o mesmo valor nos três canais
        if isinstance(v, (int, float)):
            return (float(v),) * 3
        return v

    @field_validator("airlight")
    @classmethod
    def _unit_range(cls, v: tuple[float, float, float]) -> tuple[float, float, float]:
        if any(c < 0 or c > 1 for c in v):
            raise ValueError("airlight deve estar em [0,1] em todos os canais")
        return v


# ----------------- MAPAS -----------------
@dataclass
class DepthMap:
    """Profundidade Z_x em metros + máscara de validade."""

    values: NDArray[np.floating[Any]]
    valid_mask: NDArray[np.bool_]

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        self.valid_mask = np.asarray(self.valid_mask, dtype=bool)
        if self.values.shape != self.valid_mask.shape or self.values.ndim != 2:
            raise ShapeError(
                f"DepthMap espera H×W com máscara igual: "
                f"{self.values.shape} vs {self.valid_mask.shape}"
            )
        valid = self.values[self.valid_mask]
        if valid.size and (not np.all(np.isfinite(valid)) or np.any(valid <= 0)):
            raise NumericError("profundidades válidas devem ser finitas e estritamente positivas")

    @property
    def shape(self) -> tuple[int, int]:
        return (int(self.values.shape[0]), int(self.values.shape[1]))

    @classmethod
    def dense(cls, values: NDArray[np.floating[Any]]) -> "DepthMap":
        values = np.asarray(values, dtype=np.float64)
        return cls(values=values, valid_mask=np.ones(values.shape, dtype=bool))


# ----------------- CENA ESTÉREO -----------------
@dataclass
class StereoScene:
    """Uma amostra completa: par limpo, par com névoa e disparidade exata."""

    name: str
    clean_left: Image
    clean_right: Image
    disp_left: DisparityMap
    disp_right: DisparityMap
    valid_left: NDArray[np.bool_]
    rig: CameraRig
    fog: FogParams
    fog_left: Optional[Image] = None
    fog_right: Optional[Image] = None
    occluded_left: Optional[NDArray[np.bool_]] = None  # sem correspondente na vista direita
    meta: dict[str, Any] = field(default_factory=dict)

    @property
    def shape(self) -> tuple[int, int]:
        return (int(self.disp_left.shape[0]), int(self.disp_left.shape[1]))

    def pair(self, domain: str) -> tuple[Image, Image]:
        if domain == "clean":
            return self.clean_left, self.clean_right
        if self.fog_left is None or self.fog_right is None:
            raise ShapeError(f"cena {self.name} sem par com névoa renderizado")
        return self.fog_left, self.fog_right


class SampleRecord(BaseModel):
    """Entrada do índice de um dataset em disco (caminhos relativos ao diretório)."""

    name: str
    clean_left: str
    clean_right: str
    disparity: str
    disparity_right: Optional[str] = None
    fog_left: Optional[str] = None
    fog_right: Optional[str] = None
    occlusion: Optional[str] = None
    rig: CameraRig = CameraRig()
    fog: FogParams

    model_config = ConfigDict(from_attributes=True)
