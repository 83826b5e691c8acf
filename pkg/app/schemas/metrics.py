from __future__ import annotations

from typing import List, Optional

from pydantic import BaseModel, ConfigDict, Field


class StereoEval(BaseModel):
    """Métricas de disparidade sobre os pixels válidos."""

    epe: float = Field(ge=0)
    p1: float = Field(ge=0, le=1)  # |err| > 1 px
    px3: float = Field(ge=0, le=1)  # |err| > 3 px
    d1: float = Field(ge=0, le=1)  # |err| > 3 px e > 5% do gt

    model_config = ConfigDict(frozen=True)


class DepthEval(BaseModel):
    """Métricas de profundidade (RMSE/MAE em metros, SILog ×100, δ em fração)."""

    rmse: float = Field(ge=0)
    mae: float = Field(ge=0)
    srd: float = Field(ge=0)
    ard: float = Field(ge=0)
    silog: float = Field(ge=0)
    delta1: float = Field(ge=0, le=1)
    delta2: float = Field(ge=0, le=1)
    delta3: float = Field(ge=0, le=1)

    model_config = ConfigDict(frozen=True)

    @property
    def delta3_pct(self) -> float:
        return 100.0 * self.delta3


class EvalRow(BaseModel):
    """Linha do CSV de avaliação: uma imagem (ou o agregado) em um domínio."""

    image: str
    domain: str
    epe: float
    p1: float
    px3: float
    d1: float

    @classmethod
    def from_eval(cls, image: str, domain: str, ev: StereoEval) -> "EvalRow":
        return cls(image=image, domain=domain, epe=ev.epe, p1=ev.p1, px3=ev.px3, d1=ev.d1)


class AblationRow(BaseModel):
    """Uma linha da tabela de ablação (média sobre seeds)."""

    arm: str
    label: str
    training_data: str
    disp_loss: bool = True
    triplet_loss: bool = False
    distillation_loss: bool = False
    epe_clean: float
    epe_fog: float
    p1_clean: float
    p1_fog: float
    dual_input: bool = False  # teacher: um único número para os dois domínios
    seeds: int = 1


class AblationSummary(BaseModel):
    rows: list[AblationRow]
    improvement_clean_pct: Optional[float] = None
    improvement_fog_pct: Optional[float] = None
    teacher_beats_mix: Optional[bool] = None
    cfd_beats_mix: Optional[bool] = None
    student_c_domain_gap: Optional[bool] = None


class SweepRow(BaseModel):
    """Média sobre o conjunto de avaliação re-renderizado com um único β."""

    beta: float
    epe: float
    p1: float
    px3: float
    d1: float
    rmse: Optional[float] = None
    mae: Optional[float] = None
    srd: Optional[float] = None
    ard: Optional[float] = None
    silog: Optional[float] = None
    delta3_pct: Optional[float] = None
    depth_pixels: int = 0


# ----------------- REQUISIÇÕES HTTP -----------------
class MapPairRequest(BaseModel):
    """Predição e referência H×W; `mask` opcional restringe os pixels avaliados."""

    pred: List[List[float]]
    gt: List[List[float]]
    mask: Optional[List[List[bool]]] = None
