from __future__ import annotations

import datetime
import socket

from fastapi import APIRouter, Depends, HTTPException, status
from sqlalchemy import text
from sqlalchemy.exc import SQLAlchemyError
from sqlalchemy.orm import Session

from app.deps import get_db

router = APIRouter(prefix="", tags=["monitoring"])


@router.get("/healthz")
def healthz() -> dict[str, str]:
    """
    Health check básico da aplicação.
    - Apenas retorna status `ok`.
    """
    return {"status": "ok"}


@router.get("/readyz")
def readyz(db: Session = Depends(get_db)) -> dict[str, str]:
    """
    Readiness check.
    Verifica se o registro de execuções responde a um ping simples.
    """
    try:
        # .scalar() força execução e leitura
        db.scalar(text("SELECT 1"))
    except SQLAlchemyError as e:
        raise HTTPException(
            status_code=status.HTTP_503_SERVICE_UNAVAILABLE,
            detail=f"banco indisponível: {e.__class__.__name__}",
        ) from e
    return {
        "status": "ok",
        "database": "connected",
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "hostname": socket.gethostname(),
    }
