# app/services/run_service.py
from __future__ import annotations

import logging
from datetime import datetime, timezone
from typing import Any, Mapping, Optional

from sqlalchemy.orm import Session

from app.core.errors import RunNotFoundError
from app.models.run import Run
from app.repositories.run_repo import RunRepository
from app.schemas.experiment import ExperimentConfig
from app.schemas.run import RunCreate, RunList, RunRead

logger = logging.getLogger("cfdstereo.runs")

RUNNING, SUCCEEDED, FAILED = "running", "succeeded", "failed"


class RunService:
    def __init__(self, db: Session) -> None:
        self.repo = RunRepository(db)

    # ----------------- CREATE -----------------
    def start_run(self, command: str, config: ExperimentConfig, output_dir: str) -> RunRead:
        payload = RunCreate(
            command=command,
            preset=config.preset,
            seed=config.seed,
            config_hash=config.config_hash,
            output_dir=output_dir,
        )
        run = self.repo.create({**payload.model_dump(), "status": RUNNING})
        logger.info("execução %d registrada (%s)", run.id, command)
        return RunRead.model_validate(run)

    # ----------------- UPDATE -----------------
    def finish_run(self, run_id: int, metrics: Optional[Mapping[str, Any]] = None) -> RunRead:
        run = self._get(run_id)
        run = self.repo.update(
            run,
            {
                "status": SUCCEEDED,
                "exit_code": 0,
                "metrics": dict(metrics or {}),
                "finished_at": datetime.now(timezone.utc),
            },
        )
        return RunRead.model_validate(run)

    def fail_run(self, run_id: int, exit_code: int, detail: Optional[str] = None) -> RunRead:
        run = self._get(run_id)
        run = self.repo.update(
            run,
            {
                "status": FAILED,
                "exit_code": exit_code,
                "detail": detail,
                "finished_at": datetime.now(timezone.utc),
            },
        )
        return RunRead.model_validate(run)

    # ----------------- READ -------------------
    def get_run(self, run_id: int) -> RunRead:
        return RunRead.model_validate(self._get(run_id))

    def list_runs(self, limit: int = 50, offset: int = 0, command: Optional[str] = None) -> RunList:
        items, total = self.repo.list(limit=limit, offset=offset, command=command)
        return RunList(items=[RunRead.model_validate(r) for r in items], total=total)

    def _get(self, run_id: int) -> Run:
        run = self.repo.get(run_id)
        if run is None:
            raise RunNotFoundError(f"execução {run_id} não encontrada", run_id=run_id)
        return run
