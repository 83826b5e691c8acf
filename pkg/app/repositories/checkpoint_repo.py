"""Formato binário de checkpoint.

    "CFDW" | u32 versão | u32 n_arrays |
    n × ( u32 len_nome | nome utf-8 | u32 ndim | ndim × u32 dim | f32 little-endian )
"""
from __future__ import annotations

import logging
import struct
from collections.abc import Mapping
from pathlib import Path
from typing import Any

import numpy as np
from numpy.typing import NDArray

from app.core.errors import FormatError, UnsupportedFormatError

logger = logging.getLogger("cfdstereo.checkpoint")

MAGIC = b"CFDW"
VERSION = 1
_U32 = struct.Struct("<I")


class CheckpointRepository:
    """Persistência de state_dicts no formato CFDW."""

    def __init__(self, root: str | Path | None = None) -> None:
        self.root = Path(root) if root is not None else None

    def _resolve(self, path: str | Path) -> Path:
        p = Path(path)
        return p if p.is_absolute() or self.root is None else self.root / p

    # ----------------- SAVE -----------------
    def save(self, path: str | Path, state: Mapping[str, NDArray[Any]]) -> Path:
        target = self._resolve(path)
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_bytes(encode_checkpoint(state))
        logger.info("checkpoint salvo em %s (%d arrays)", target, len(state))
        return target

    # ----------------- LOAD -----------------
    def load(self, path: str | Path) -> dict[str, NDArray[np.float32]]:
        target = self._resolve(path)
        if not target.is_file():
            raise FileNotFoundError(f"checkpoint não encontrado: {target}")
        return decode_checkpoint(target.read_bytes())


def encode_checkpoint(state: Mapping[str, NDArray[Any]]) -> bytes:
    chunks = [MAGIC, _U32.pack(VERSION), _U32.pack(len(state))]
    for name, value in state.items():
        arr = np.asarray(value, dtype="<f4")
        raw_name = name.encode("utf-8")
        chunks.append(_U32.pack(len(raw_name)) + raw_name + _U32.pack(arr.ndim))
        chunks.extend(_U32.pack(d) for d in arr.shape)
        chunks.append(np.ascontiguousarray(arr).tobytes())
    return b"".join(chunks)


def decode_checkpoint(buf: bytes) -> dict[str, NDArray[np.float32]]:
    offset = 0

    def take(n: int, what: str) -> bytes:
        nonlocal offset
        if offset + n > len(buf):
            raise FormatError(f"checkpoint truncado lendo {what}", offset=offset)
        chunk = buf[offset : offset + n]
        offset += n
        return chunk

    def u32(what: str) -> int:
        return int(_U32.unpack(take(4, what))[0])

    if take(4, "assinatura") != MAGIC:
        raise FormatError("assinatura de checkpoint inválida (esperado 'CFDW')", offset=0)
    version = u32("versão")
    if version != VERSION:
        raise UnsupportedFormatError(f"versão de checkpoint {version} não suportada", offset=4)
    count = u32("número de arrays")
    state: dict[str, NDArray[np.float32]] = {}
    for _ in range(count):
        name_at = offset
        try:
            name = take(u32("tamanho do nome"), "nome").decode("utf-8")
        except UnicodeDecodeError as e:
            raise FormatError("nome de array não é UTF-8", offset=name_at) from e
        shape = tuple(u32("dimensão") for _ in range(u32("ndim")))
        n_bytes = int(np.prod(shape, dtype=np.int64)) * 4
        data = np.frombuffer(take(n_bytes, f"dados de {name}"), dtype="<f4").reshape(shape)
        state[name] = data.astype(np.float32)
    if offset != len(buf):
        raise FormatError(
            f"{len(buf) - offset} bytes sobrando após o último array", offset=offset
        )
    return state
