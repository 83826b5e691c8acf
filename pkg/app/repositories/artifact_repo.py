"""Artefatos de uma execução: manifest (config + checksums), CSVs e tabelas em texto."""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import platform
from collections.abc import Iterable, Mapping, Sequence
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

import numpy as np
from pydantic import BaseModel, Field

from app.core.errors import ConfigError

logger = logging.getLogger("cfdstereo.artifacts")

MANIFEST_FILE = "manifest.json"


def sha256_file(path: str | Path) -> str:
    digest = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


class Manifest(BaseModel):
    """Tudo o que é preciso para repetir uma execução bit a bit."""

    command: str
    args: dict[str, Any] = Field(default_factory=dict)
    config: str
    config_hash: str
    seed: int
    inputs: dict[str, str] = Field(default_factory=dict)  # caminho -> sha256
    outputs: dict[str, str] = Field(default_factory=dict)  # relativo ao diretório -> sha256
    versions: dict[str, str] = Field(default_factory=dict)
    created_at: str = Field(default_factory=lambda: datetime.now(timezone.utc).isoformat())


class ArtifactRepository:
    def __init__(self, output_dir: str | Path) -> None:
        self.output_dir = Path(output_dir)

    def path(self, name: str) -> Path:
        self.output_dir.mkdir(parents=True, exist_ok=True)
        return self.output_dir / name

    # ----------------- CSV / TEXTO -----------------
    def write_csv(
        self, name: str, header: Sequence[str], rows: Iterable[Sequence[Any] | Mapping[str, Any]]
    ) -> Path:
        target = self.path(name)
        with target.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                values = [row[k] for k in header] if isinstance(row, Mapping) else list(row)
                writer.writerow([_fmt_cell(v) for v in values])
        return target

    def write_text(self, name: str, text: str) -> Path:
        target = self.path(name)
        target.write_text(text, encoding="utf-8")
        return target

    # ----------------- MANIFEST -----------------
    def write_manifest(
        self,
        *,
        command: str,
        config_text: str,
        config_hash: str,
        seed: int,
        args: Mapping[str, Any] | None = None,
        inputs: Iterable[str | Path] = (),
        outputs: Iterable[str | Path] = (),
    ) -> Manifest:
        manifest = Manifest(
            command=command,
            args=dict(args or {}),
            config=config_text,
            config_hash=config_hash,
            seed=seed,
            inputs={str(p): sha256_file(p) for p in inputs},
            outputs={
                self._relative(p): sha256_file(self.output_dir / self._relative(p)) for p in outputs
            },
            versions={"python": platform.python_version(), "numpy": np.__version__},
        )
        self.path(MANIFEST_FILE).write_text(manifest.model_dump_json(indent=2), encoding="utf-8")
        logger.info("manifest gravado em %s", self.output_dir / MANIFEST_FILE)
        return manifest

    def _relative(self, p: str | Path) -> str:
        path = Path(p)
        if path.is_relative_to(self.output_dir):
            return str(path.relative_to(self.output_dir))
        return str(path)

    @staticmethod
    def read_manifest(path: str | Path) -> Manifest:
        p = Path(path)
        if p.is_dir():
            p = p / MANIFEST_FILE
        if not p.is_file():
            raise ConfigError(f"manifest não encontrado: {p}")
        try:
            return Manifest.model_validate(json.loads(p.read_text(encoding="utf-8")))
        except ValueError as e:
            raise ConfigError(f"manifest inválido em {p}: {e}") from e


def _fmt_cell(value: Any) -> Any:
    if isinstance(value, float):
        return f"{value:.6f}"
    if isinstance(value, bool):
        return "true" if value else "false"
    return value
