# app/deps.py
from collections.abc import Generator

from fastapi import Depends
from sqlalchemy.orm import Session

from app.db.session import SessionLocal
from app.services.run_service import RunService


def get_db() -> Generator[Session, None, None]:
    """Sessão por request: abre/fecha corretamente."""
    db = SessionLocal()
    try:
        yield db
    finally:
        db.close()


def get_run_service(db: Session = Depends(get_db)) -> RunService:
    return RunService(db)
