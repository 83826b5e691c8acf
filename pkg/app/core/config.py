from __future__ import annotations

from functools import lru_cache
from typing import Literal

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    DATABASE_URL: str = "sqlite:///./cfdstereo.sqlite3"  # registro de execuções
    DEBUG: bool = False
    ENVIRONMENT: str = "development"  # development, staging, production
    LOG_LEVEL: str = "INFO"
    OUTPUT_ROOT: str = "./runs"
    NUM_WORKERS: int = 4
    NUMERIC_MODE: Literal["training", "oracle"] = "training"

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        env_prefix="CFD_",
        extra="ignore",
    )


settings = Settings()


@lru_cache
def get_settings() -> Settings:
    """Dependência FastAPI; lê o ambiente uma vez por processo."""
    return Settings()
