"""Tensor denso com diferenciação automática em modo reverso.

Cada operação diferenciável grava um `Node` na fita (`Tape`) ativa. O
`backward` percorre os nós alcançáveis a partir da perda em ordem reversa de
gravação, que é uma ordem topológica por construção.
"""
from __future__ import annotations

import itertools
import logging
from collections.abc import Callable, Iterator, Sequence
from contextlib import contextmanager
from dataclasses import dataclass
from types import ModuleType
from typing import Any, Union

import numpy as np
from numpy.typing import ArrayLike, NDArray

from app.core.errors import GradientError, ShapeError

logger = logging.getLogger("cfdstereo.tensor")

Array = NDArray[np.floating[Any]]
VJP = Callable[[Array], Sequence[Union[Array, None]]]


# ----------------- MODOS NUMÉRICOS -----------------
@dataclass(frozen=True)
class NumericMode:
    """Precisão + política para log/sqrt/divisão fora do domínio."""

    name: str
    dtype: type[np.floating[Any]]
    strict: bool
    eps: float = 1e-8


ORACLE = NumericMode("oracle", np.float64, strict=True)
TRAINING = NumericMode("training", np.float32, strict=False)
MODES: dict[str, NumericMode] = {m.name: m for m in (ORACLE, TRAINING)}


class _State:
    mode: NumericMode = TRAINING
    grad_enabled: bool = True
    tape: "Tape | None" = None
    branches: "list[NDArray[Any]] | None" = None


_state = _State()


def get_mode() -> NumericMode:
    return _state.mode


def set_numeric_mode(mode: str | NumericMode) -> NumericMode:
    """Troca o modo do processo inteiro (usado pela CLI a partir de Settings)."""
    _state.mode = MODES[mode] if isinstance(mode, str) else mode
    return _state.mode


@contextmanager
def numeric_mode(mode: str | NumericMode) -> Iterator[NumericMode]:
    previous = _state.mode
    try:
        yield set_numeric_mode(mode)
    finally:
        _state.mode = previous


@contextmanager
def no_grad() -> Iterator[None]:
    """Desliga a gravação na fita (avaliação, diferenças finitas)."""
    previous = _state.grad_enabled
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = previous


def is_grad_enabled() -> bool:
    return _state.grad_enabled


# ----------------- RAMOS -----------------
def note_branch(pattern: ArrayLike) -> None:
    """Anota o ramo escolhido por uma operação não suave (relu, abs, clamp, lookup)."""
    if _state.branches is not None:
        _state.branches.append(np.array(pattern, copy=True))


@contextmanager
def branch_trace() -> Iterator[list[NDArray[Any]]]:
    """Coleta os ramos anotados durante um forward, na ordem das operações."""
    previous = _state.branches
    trace: list[NDArray[Any]] = []
    _state.branches = trace
    try:
        yield trace
    finally:
        _state.branches = previous


# ----------------- FITA -----------------
_tape_ids = itertools.count(1)


@dataclass(eq=False)
class Node:
    op: str
    parents: tuple["Tensor", ...]
    vjp: VJP
    output: "Tensor"
    index: int
    tape: "Tape"
    generation: int = 0


class Tape:
    """Lista ordenada das operações gravadas durante um forward."""

    def __init__(self) -> None:
        self.id = next(_tape_ids)
        self.nodes: list[Node] = []
        self.generation = 0
        self._counter = itertools.count()
        self._consumed: list[Tensor] = []

    def __len__(self) -> int:
        return len(self.nodes)

    def record(self, op: str, parents: tuple["Tensor", ...], vjp: VJP, output: "Tensor") -> Node:
        node = Node(
            op=op,
            parents=parents,
            vjp=vjp,
            output=output,
            index=next(self._counter),
            tape=self,
            generation=self.generation,
        )
        self.nodes.append(node)
        return node

    def reset(self) -> None:
        """Esquece o grafo gravado; libera novos `backward`."""
        for t in self._consumed:
            t._backwarded = False
        self._consumed.clear()
        self.nodes.clear()
        self.generation += 1

    def trim(self) -> None:
        """Solta a lista de nós; grafos ainda referenciados continuam válidos."""
        self.nodes.clear()
        self._consumed.clear()

    def backward(self, loss: "Tensor") -> None:
        if loss.data.size != 1:
            raise GradientError(f"backward exige perda escalar, recebeu shape {loss.shape}")
        if loss._node is None:
            raise GradientError(
                "fita vazia: a perda não depende de nenhum tensor com requires_grad"
            )
        if loss._backwarded:
            raise GradientError("backward já executado para esta perda; chame tape.reset() antes")
        if loss._node.generation != self.generation:
            raise GradientError("grafo descartado por tape.reset(); refaça o forward")

        # nós alcançáveis a partir da perda
        reachable: dict[int, Node] = {}
        stack = [loss._node]
        while stack:
            node = stack.pop()
            if id(node) in reachable:
                continue
            if node.tape is not self:
                raise GradientError(
                    f"grafo atravessa as fitas {self.id} e {node.tape.id}; "
                    "grave o forward inteiro em um único tape_scope"
                )
            reachable[id(node)] = node
            stack.extend(p._node for p in node.parents if p._node is not None and p.requires_grad)

        grads: dict[int, Array] = {id(loss): np.ones_like(loss.data)}
        for node in sorted(reachable.values(), key=lambda n: n.index, reverse=True):
            g = grads.pop(id(node.output), None)
            if g is None:
                continue
            node.output._accumulate(g)
            for parent, pg in zip(node.parents, node.vjp(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = grads[key] + pg if key in grads else pg

        # sobram apenas folhas (parâmetros, entradas)
        leaves = {id(p): p for n in reachable.values() for p in n.parents if p._node is None}
        for key, g in grads.items():
            leaves[key]._accumulate(g)

        loss._backwarded = True
        self._consumed.append(loss)
        logger.debug("backward na fita %d: %d nós", self.id, len(reachable))


_default_tape = Tape()


def active_tape() -> Tape:
    return _state.tape or _default_tape


@contextmanager
def tape_scope() -> Iterator[Tape]:
    """Fita nova para um passo de treino; descartada ao sair."""
    previous = _state.tape
    tape = Tape()
    _state.tape = tape
    try:
        yield tape
    finally:
        _state.tape = previous


def backward(loss: "Tensor") -> None:
    """Popula `.grad` em todo ancestral da perda com requires_grad=True."""
    if loss._node is None:
        raise GradientError(
            "fita vazia: a perda não depende de nenhum tensor com requires_grad"
        )
    tape = loss._node.tape
    tape.backward(loss)
    if tape is _default_tape:
        # fora de tape_scope a fita global só cresceria
        tape.trim()


# ----------------- TENSOR -----------------
def _ops() -> ModuleType:
    # import tardio: ops depende de Tensor
    from app.tensor import ops

    return ops


Operand = Union["Tensor", float, int]


class Tensor:
    """Array N-dimensional contíguo, nó da fita de autodiff."""

    __array_priority__ = 1000

    def __init__(self, data: ArrayLike, requires_grad: bool = False, *, dtype: Any = None) -> None:
        dtype = dtype if dtype is not None else _state.mode.dtype
        self.data: Array = np.array(data, dtype=dtype, order="C")
        self.requires_grad = requires_grad
        self.grad: Array | None = None
        self._node: Node | None = None
        self._backwarded = False

    # ----------------- PROPRIEDADES -----------------
    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.data.shape)

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def dtype(self) -> np.dtype[Any]:
        return self.data.dtype

    @property
    def tape_id(self) -> int | None:
        return self._node.tape.id if self._node is not None else None

    def numpy(self) -> Array:
        return self.data.copy()

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() exige tensor de um elemento, shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        """Cópia sem histórico: o gradiente para aqui."""
        return Tensor(self.data, dtype=self.data.dtype)

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, g: Array) -> None:
        g = np.asarray(g, dtype=self.data.dtype).reshape(self.data.shape)
        self.grad = g.copy() if self.grad is None else self.grad + g

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}{flag})"

    # ----------------- OPERADORES -----------------
    def __add__(self, other: Operand) -> "Tensor":
        return _ops().add(self, other)

    def __radd__(self, other: Operand) -> "Tensor":
        return _ops().add(other, self)

    def __sub__(self, other: Operand) -> "Tensor":
        return _ops().sub(self, other)

    def __rsub__(self, other: Operand) -> "Tensor":
        return _ops().sub(other, self)

    def __mul__(self, other: Operand) -> "Tensor":
        return _ops().mul(self, other)

    def __rmul__(self, other: Operand) -> "Tensor":
        return _ops().mul(other, self)

    def __truediv__(self, other: Operand) -> "Tensor":
        return _ops().div(self, other)

    def __neg__(self) -> "Tensor":
        return _ops().mul(self, -1.0)

    def sum(self, axis: int | tuple[int, ...] | None = None, keepdims: bool = False) -> "Tensor":
        return _ops().sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis: int | tuple[int, ...] | None = None, keepdims: bool = False) -> "Tensor":
        return _ops().mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape: int) -> "Tensor":
        return _ops().reshape(self, shape)

    def sigmoid(self) -> "Tensor":
        return _ops().sigmoid(self)

    def relu(self) -> "Tensor":
        return _ops().relu(self)

    def tanh(self) -> "Tensor":
        return _ops().tanh(self)

    def abs(self) -> "Tensor":
        return _ops().abs(self)

    def square(self) -> "Tensor":
        return _ops().square(self)


def record(op: str, data: ArrayLike, parents: Sequence[Tensor], vjp: VJP) -> Tensor:
    """Cria a saída de uma operação e grava o nó quando algum pai exige gradiente."""
    out = Tensor(data, dtype=np.result_type(*(p.data.dtype for p in parents)))
    if _state.grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._node = active_tape().record(op, tuple(parents), vjp, out)
    return out


def as_tensor(value: Operand | ArrayLike, like: Tensor | None = None) -> Tensor:
    if isinstance(value, Tensor):
        return value
    dtype = like.data.dtype if like is not None else None
    return Tensor(value, dtype=dtype)


def zeros(shape: Sequence[int], requires_grad: bool = False) -> Tensor:
    return Tensor(np.zeros(tuple(shape)), requires_grad=requires_grad)


def ones(shape: Sequence[int], requires_grad: bool = False) -> Tensor:
    return Tensor(np.ones(tuple(shape)), requires_grad=requires_grad)
