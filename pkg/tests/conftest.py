from __future__ import annotations

import os
import sys
from collections.abc import Iterator

import numpy as np
import pytest
from sqlalchemy.orm import Session

# 1) Garanta que a raiz do projeto está no PYTHONPATH
#    (roda 'pytest' a partir da raiz; isto é só um fallback)
PROJECT_ROOT = os.path.dirname(os.path.abspath(__file__))
ROOT_CANDIDATE = os.path.abspath(os.path.join(PROJECT_ROOT, ".."))
if ROOT_CANDIDATE not in sys.path:
    sys.path.insert(0, ROOT_CANDIDATE)

from app.db.session import SessionLocal, init_db  # noqa: E402
from app.schemas.experiment import ExperimentConfig  # noqa: E402
from app.schemas.scene import StereoScene  # noqa: E402
from app.services.dataset_service import DatasetService  # noqa: E402
from app.tensor import numeric_mode  # noqa: E402

# Configuração mínima: 16×32, C=4, duas iterações, dois passos de treino
TINY_CONFIG_LINES = [
    "seed=7",
    "data.n_scenes=4",
    "data.height=16",
    "data.width=32",
    "data.disp_range=2,6",
    "data.layers=2,3",
    "data.eval_fraction=0.5",
    "model.channels=4",
    "model.downsample=4",
    "model.iters=2",
    "model.max_disp=3",
    "model.radius=1",
    "train.teacher_steps=2",
    "train.student_steps=2",
    "train.batch_size=2",
    "train.log_every=1",
    "ablation.seeds=1",
    "sweep.betas=0.0,0.2",
]


@pytest.fixture(autouse=True)
def oracle_mode() -> Iterator[None]:
    """Todos os testes rodam em f64 estrito, salvo quando pedem outro modo."""
    with numeric_mode("oracle"):
        yield


@pytest.fixture()
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture()
def tiny_config() -> ExperimentConfig:
    return ExperimentConfig.from_lines(TINY_CONFIG_LINES)


@pytest.fixture()
def tiny_scenes(tiny_config: ExperimentConfig) -> list[StereoScene]:
    return DatasetService().synthesize(tiny_config)


@pytest.fixture()
def config_file(tmp_path, tiny_config: ExperimentConfig):
    path = tmp_path / "experiment.cfg"
    path.write_text(tiny_config.to_text(), encoding="utf-8")
    return path


@pytest.fixture(autouse=True)
def database(tmp_path) -> Iterator[str]:
    """Registro de execuções em um SQLite temporário por teste."""
    url = f"sqlite:///{tmp_path / 'runs.sqlite3'}"
    init_db(url)
    yield url


@pytest.fixture()
def db_session(database: str) -> Iterator[Session]:
    session = SessionLocal()
    try:
        yield session
    finally:
        session.close()


@pytest.fixture()
def client(database: str):
    """TestClient ligado ao SQLite temporário (o lifespan cria as tabelas)."""
    from fastapi.testclient import TestClient

    from app.main import app

    with TestClient(app) as c:
        yield c
