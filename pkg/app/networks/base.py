"""Contêineres de parâmetros: descoberta por atributos, state_dict e convoluções."""
from __future__ import annotations

from collections.abc import Iterator, Mapping
from typing import Any

import numpy as np
from numpy.typing import NDArray

from app.core.errors import ConfigError, ShapeError
from app.tensor import Tensor, get_mode
from app.tensor import ops


class Parameter(Tensor):
    """Tensor treinável; `requires_grad` começa ligado."""

    def __init__(self, data: Any, *, dtype: Any = None) -> None:
        super().__init__(data, requires_grad=True, dtype=dtype)


class Module:
    """Base dos blocos da rede.

    Parâmetros e submódulos são encontrados pelos atributos públicos, na
    ordem de atribuição; listas de módulos recebem o índice no nome.
    """

    def _children(self) -> Iterator[tuple[str, Any]]:
        for name, value in vars(self).items():
            if name.startswith("_"):
                continue
            if isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, (Parameter, Module)):
                        yield f"{name}.{i}", item
            elif isinstance(value, (Parameter, Module)):
                yield name, value

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Parameter]]:
        for name, value in self._children():
            if isinstance(value, Parameter):
                yield prefix + name, value
            else:
                yield from value.named_parameters(f"{prefix}{name}.")

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def freeze(self) -> None:
        """Congela: nenhuma operação sobre estes parâmetros grava na fita."""
        for p in self.parameters():
            p.requires_grad = False
            p.zero_grad()

    # ----------------- SERIALIZAÇÃO -----------------
    def state_dict(self) -> dict[str, NDArray[np.floating[Any]]]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: Mapping[str, NDArray[Any]], strict: bool = True) -> None:
        params = dict(self.named_parameters())
        missing = sorted(set(params) - set(state))
        unexpected = sorted(set(state) - set(params))
        if strict and (missing or unexpected):
            raise ConfigError(
                f"checkpoint incompatível (faltando: {missing[:5]}, inesperados: {unexpected[:5]})"
            )
        for name, p in params.items():
            if name not in state:
                continue
            value = np.asarray(state[name])
            if value.shape != p.shape:
                raise ShapeError(f"parâmetro {name}: shape {value.shape} != {p.shape}")
            p.data[...] = value.astype(p.dtype)

    def copy_from(self, other: "Module") -> None:
        self.load_state_dict(other.state_dict())


# ----------------- CAMADAS -----------------
def he_normal(
    rng: np.random.Generator, shape: tuple[int, ...], fan_in: int, gain: float = 2.0
) -> NDArray[np.floating[Any]]:
    return rng.normal(0.0, np.sqrt(gain / fan_in), size=shape)


class Conv2d(Module):
    """Convolução k×k com padding 'same' (k // 2)."""

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel_size: int,
        rng: np.random.Generator,
        *,
        stride: int = 1,
        gain: float = 2.0,
        zero_init: bool = False,
    ) -> None:
        if kernel_size % 2 == 0:
            raise ShapeError(f"kernel_size deve ser ímpar, recebeu {kernel_size}")
        shape = (kernel_size, kernel_size, in_channels, out_channels)
        fan_in = kernel_size * kernel_size * in_channels
        dtype = get_mode().dtype
        w = np.zeros(shape) if zero_init else he_normal(rng, shape, fan_in, gain)
        self.weight = Parameter(w, dtype=dtype)
        self.bias = Parameter(np.zeros(out_channels), dtype=dtype)
        self.stride = stride
        self.padding = kernel_size // 2

    @property
    def in_channels(self) -> int:
        return self.weight.shape[2]

    @property
    def out_channels(self) -> int:
        return self.weight.shape[3]

    def __call__(self, x: Tensor) -> Tensor:
        return ops.conv2d(x, self.weight, self.bias, stride=self.stride, padding=self.padding)
