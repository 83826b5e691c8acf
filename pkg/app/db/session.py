from __future__ import annotations

import logging

from sqlalchemy import Engine, create_engine
from sqlalchemy.orm import sessionmaker
from sqlalchemy.pool import StaticPool

from app.core.config import settings
from app.db.base import Base

logger = logging.getLogger("cfdstereo.db")


def make_engine(url: str) -> Engine:
    """Engine SQLAlchemy; SQLite aceita conexões de outras threads (TestClient, uvicorn)."""
    kwargs: dict = {"echo": False, "pool_pre_ping": True, "future": True}
    if url.startswith("sqlite"):
        kwargs["connect_args"] = {"check_same_thread": False}
        if ":memory:" in url or url in {"sqlite://", "sqlite:///"}:
            kwargs["poolclass"] = StaticPool
    return create_engine(url, **kwargs)


# Engine do registro de execuções (SQLite por padrão)
engine = make_engine(settings.DATABASE_URL)

# Factory para criar sessões
SessionLocal = sessionmaker(
    autocommit=False,
    autoflush=False,
    bind=engine,
    expire_on_commit=False,
    future=True,
)


def init_db(url: str | None = None) -> Engine:
    """
    Cria as tabelas; com `url`, troca antes o engine ligado a `SessionLocal`.
    """
    global engine
    import app.models  # noqa: F401

    if url is not None and url != engine.url.render_as_string(hide_password=False):
        engine.dispose()
        engine = make_engine(url)
        SessionLocal.configure(bind=engine)
    Base.metadata.create_all(bind=engine)
    logger.debug("tabelas do registro criadas em %s", engine.url)
    return engine
