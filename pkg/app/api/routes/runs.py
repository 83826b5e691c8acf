# app/api/routes/runs.py
from __future__ import annotations

from typing import Optional

from fastapi import APIRouter, Depends, Query

from app.deps import get_run_service
from app.schemas.run import RunList, RunRead
from app.services.run_service import RunService

router = APIRouter(prefix="/runs", tags=["runs"])


@router.get("", response_model=RunList, summary="Listar execuções")
def list_runs(
    limit: int = Query(50, ge=1, le=500),
    offset: int = Query(0, ge=0),
    command: Optional[str] = Query(None),
    svc: RunService = Depends(get_run_service),
) -> RunList:
    """Execuções da CLI, mais recentes primeiro."""
    return svc.list_runs(limit=limit, offset=offset, command=command)


@router.get("/{run_id}", response_model=RunRead, summary="Obter execução por ID")
def get_run(run_id: int, svc: RunService = Depends(get_run_service)) -> RunRead:
    """404 em Problem+JSON quando o ID não existe."""
    return svc.get_run(run_id)
