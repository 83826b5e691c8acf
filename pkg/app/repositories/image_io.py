"""Leitura e escrita de PFM (disparidade, 1 canal) e PPM binário P6.

Erros de formato informam o byte onde o problema foi encontrado.
"""
from __future__ import annotations

from pathlib import Path
from typing import Any

import numpy as np
from numpy.typing import NDArray

from app.core.errors import FormatError, ShapeError, UnsupportedFormatError


def _read_line(buf: bytes, offset: int, what: str) -> tuple[str, int]:
    end = buf.find(b"\n", offset)
    if end < 0:
        raise FormatError(f"cabeçalho truncado: esperado {what}", offset=offset)
    try:
        return buf[offset:end].decode("ascii").strip(), end + 1
    except UnicodeDecodeError as e:
        raise FormatError(f"cabeçalho não ASCII em {what}", offset=offset) from e


# ----------------- PFM -----------------
def read_pfm(path: str | Path) -> NDArray[np.float32]:
    """Mapa H×W em f32. Linhas gravadas de baixo para cima; escala < 0 indica little-endian."""
    buf = Path(path).read_bytes()
    magic, offset = _read_line(buf, 0, "assinatura")
    if magic == "PF":
        raise UnsupportedFormatError("PFM colorido ('PF') não suportado; use 'Pf'", offset=0)
    if magic != "Pf":
        raise FormatError(f"assinatura PFM inválida: {magic!r}", offset=0)

    dims_at = offset
    dims, offset = _read_line(buf, offset, "dimensões")
    parts = dims.split()
    if len(parts) != 2 or not all(p.isdigit() for p in parts):
        raise FormatError(f"linha de dimensões inválida: {dims!r}", offset=dims_at)
    width, height = int(parts[0]), int(parts[1])

    scale_at = offset
    scale_line, offset = _read_line(buf, offset, "escala")
    try:
        scale = float(scale_line)
    except ValueError as e:
        raise FormatError(f"escala inválida: {scale_line!r}", offset=scale_at) from e
    if scale == 0:
        raise FormatError("escala PFM não pode ser zero", offset=scale_at)
    endian = "<" if scale < 0 else ">"

    expected = width * height * 4
    payload = buf[offset:]
    if len(payload) < expected:
        raise FormatError(
            f"payload truncado: {len(payload)} de {expected} bytes", offset=offset + len(payload)
        )
    data = np.frombuffer(payload[:expected], dtype=f"{endian}f4").reshape(height, width)
    return np.ascontiguousarray(np.flipud(data)).astype(np.float32)


def write_pfm(path: str | Path, values: NDArray[Any]) -> None:
    arr = np.asarray(values, dtype=np.float32)
    if arr.ndim != 2:
        raise ShapeError(f"PFM grava apenas mapas H×W, recebeu {arr.shape}")
    height, width = arr.shape
    header = f"Pf\n{width} {height}\n-1.0\n".encode("ascii")
    body = np.flipud(arr).astype("<f4").tobytes()
    Path(path).write_bytes(header + body)


# ----------------- PPM -----------------
def read_ppm(path: str | Path) -> NDArray[np.float64]:
    """P6 binário com maxval 255 -> H×W×3 em [0, 1]."""
    buf = Path(path).read_bytes()
    tokens: list[tuple[str, int]] = []
    offset = 0
    # P6, largura, altura, maxval; comentários '#' até o fim da linha
    while len(tokens) < 4:
        while offset < len(buf) and buf[offset : offset + 1].isspace():
            offset += 1
        if offset >= len(buf):
            raise FormatError("cabeçalho PPM truncado", offset=offset)
        if buf[offset : offset + 1] == b"#":
            end = buf.find(b"\n", offset)
            offset = len(buf) if end < 0 else end + 1
            continue
        start = offset
        while offset < len(buf) and not buf[offset : offset + 1].isspace():
            offset += 1
        tokens.append((buf[start:offset].decode("ascii", errors="replace"), start))
    offset += 1  # um único whitespace separa o cabeçalho dos dados

    (magic, _), (w_tok, w_at), (h_tok, h_at), (max_tok, max_at) = tokens
    if magic != "P6":
        raise FormatError(f"assinatura PPM inválida: {magic!r} (esperado 'P6')", offset=0)
    for tok, at in ((w_tok, w_at), (h_tok, h_at), (max_tok, max_at)):
        if not tok.isdigit():
            raise FormatError(f"campo numérico inválido no cabeçalho: {tok!r}", offset=at)
    width, height, maxval = int(w_tok), int(h_tok), int(max_tok)
    if maxval != 255:
        raise UnsupportedFormatError(f"maxval {maxval} não suportado (apenas 255)", offset=max_at)

    expected = width * height * 3
    payload = buf[offset:]
    if len(payload) != expected:
        raise FormatError(
            f"tamanho do payload {len(payload)} não corresponde a "
            f"{width}×{height}×3 = {expected}",
            offset=offset,
        )
    data = np.frombuffer(payload, dtype=np.uint8).reshape(height, width, 3)
    return data.astype(np.float64) / 255.0


def write_ppm(path: str | Path, image: NDArray[Any]) -> None:
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ShapeError(f"PPM grava imagens H×W×3, recebeu {arr.shape}")
    height, width = arr.shape[:2]
    quantized = np.clip(np.round(arr * 255.0), 0, 255).astype(np.uint8)
    Path(path).write_bytes(f"P6\n{width} {height}\n255\n".encode("ascii") + quantized.tobytes())
