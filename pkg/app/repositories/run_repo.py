# app/repositories/run_repo.py
from __future__ import annotations

from typing import Any, Optional, Tuple

from sqlalchemy import func, select
from sqlalchemy.orm import Session

from app.models.run import Run


class RunRepository:
    """Acesso a dados do registro de execuções.

    Métodos expostos:
      - create(data) -> Run
      - get(run_id) -> Optional[Run]
      - list(limit, offset, command) -> Tuple[list[Run], int]
      - update(run, data) -> Run
    """

    def __init__(self, session: Session) -> None:
        self.session: Session = session

    # ----------------- CREATE -----------------
    def create(self, data: dict[str, Any]) -> Run:
        run = Run(**data)
        self.session.add(run)
        self.session.commit()
        self.session.refresh(run)
        return run

    # ----------------- READ -------------------
    def get(self, run_id: int) -> Optional[Run]:
        return self.session.get(Run, run_id)

    def list(
        self,
        limit: int = 50,
        offset: int = 0,
        command: Optional[str] = None,
    ) -> Tuple[list[Run], int]:
        """Execuções mais recentes primeiro, com total para paginação."""
        stmt = select(Run)
        if command:
            stmt = stmt.where(Run.command == command)

        total_stmt = select(func.count()).select_from(stmt.subquery())
        total = self.session.execute(total_stmt).scalar_one()

        stmt = stmt.order_by(Run.id.desc()).limit(limit).offset(offset)
        items = list(self.session.execute(stmt).scalars().all())
        return items, int(total)

    # ----------------- UPDATE -----------------
    def update(self, run: Run, data: dict[str, Any]) -> Run:
        for k, v in data.items():
            if hasattr(run, k):
                setattr(run, k, v)
        self.session.commit()
        self.session.refresh(run)
        return run
