from __future__ import annotations

from datetime import datetime
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, ConfigDict


# ----------------- BASE -----------------
class RunBase(BaseModel):
    """
    Esquema base de uma execução da CLI.
    Campos comuns para Create e Read.
    """

    command: str
    preset: Optional[str] = None
    seed: int
    config_hash: str
    output_dir: str

    model_config = ConfigDict(from_attributes=True)


# ----------------- CREATE -----------------
class RunCreate(RunBase):
    pass


# ----------------- READ -----------------
class RunRead(RunBase):
    """Resposta da API: inclui status, métricas e timestamps."""

    id: int
    status: str
    exit_code: Optional[int] = None
    metrics: Dict[str, Any] = {}
    detail: Optional[str] = None
    created_at: datetime
    finished_at: Optional[datetime] = None


# ----------------- LIST (PAGINADO) -----------------
class RunList(BaseModel):
    items: List[RunRead]
    total: int
