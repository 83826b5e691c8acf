"""Conversão de listas JSON em arrays numpy com shape verificado."""
from __future__ import annotations

from typing import Any, Sequence

import numpy as np
from numpy.typing import NDArray

from app.core.errors import ShapeError


def as_array(values: Sequence[Any], name: str, ndim: int, dtype: Any = np.float64) -> NDArray[Any]:
    try:
        arr = np.asarray(values, dtype=dtype)
    except ValueError as e:
        raise ShapeError(f"'{name}' não é uma grade retangular") from e
    if arr.ndim != ndim or 0 in arr.shape:
        raise ShapeError(f"'{name}' deve ter {ndim} dimensões não vazias, recebeu {arr.shape}")
    return arr
