from __future__ import annotations

from datetime import datetime, timezone
from typing import Any, Dict, Optional

from sqlalchemy import JSON, DateTime, Integer, String, Text
from sqlalchemy.orm import Mapped, mapped_column

from app.db.base import Base


def _utcnow() -> datetime:
    return datetime.now(timezone.utc)


class Run(Base):
    """Modelo ORM de uma execução da CLI (tabela `runs`)."""

    __tablename__ = "runs"

    # PK
    id: Mapped[int] = mapped_column(Integer, primary_key=True, autoincrement=True)

    command: Mapped[str] = mapped_column(String(40), index=True, nullable=False)
    preset: Mapped[Optional[str]] = mapped_column(String(40), nullable=True)
    seed: Mapped[int] = mapped_column(Integer, nullable=False)
    config_hash: Mapped[str] = mapped_column(String(64), index=True, nullable=False)
    output_dir: Mapped[str] = mapped_column(String(500), nullable=False)

    # running | succeeded | failed
    status: Mapped[str] = mapped_column(String(20), nullable=False, default="running")
    exit_code: Mapped[Optional[int]] = mapped_column(Integer, nullable=True)
    metrics: Mapped[Dict[str, Any]] = mapped_column(JSON, nullable=False, default=dict)
    detail: Mapped[Optional[str]] = mapped_column(Text, nullable=True)

    # Timestamps
    created_at: Mapped[datetime] = mapped_column(
        DateTime(timezone=True), nullable=False, default=_utcnow
    )
    finished_at: Mapped[Optional[datetime]] = mapped_column(DateTime(timezone=True), nullable=True)
