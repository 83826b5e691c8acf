# app/core/logging.py
import logging
import sys


def setup_logging(level: str | int = logging.INFO) -> None:
    """Configura o logging do processo (stderr; stdout fica para CSVs e tabelas da CLI)."""
    if isinstance(level, str):
        level = logging.getLevelName(level.upper())
    logging.basicConfig(
        level=level,
        format="%(asctime)s [%(levelname)s] %(name)s - %(message)s",
        handlers=[logging.StreamHandler(sys.stderr)],
        force=True,
    )
