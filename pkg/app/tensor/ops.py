"""Operações diferenciáveis sobre `Tensor`.

Layout de imagens e features: H×W×C, sem dimensão de batch.
"""
from __future__ import annotations

from collections.abc import Sequence
from typing import Any, Literal

import numpy as np

from app.core.errors import NumericError, ShapeError
from app.tensor.tensor import Array, Operand, Tensor, as_tensor, get_mode, note_branch, record

ElementwiseOp = Literal[
    "add", "sub", "mul", "div", "sigmoid", "relu", "abs", "exp", "log", "square", "sqrt", "tanh"
]


# ----------------- BROADCAST -----------------
def unbroadcast(grad: Array, shape: tuple[int, ...]) -> Array:
    """Soma o gradiente nos eixos expandidos pelo broadcast, voltando a `shape`."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(a: Tensor, b: Tensor) -> tuple[int, ...]:
    try:
        return tuple(np.broadcast_shapes(a.shape, b.shape))
    except ValueError as e:
        raise ShapeError(f"shapes não compatíveis para broadcast: {a.shape} e {b.shape}") from e


def _pair(a: Operand, b: Operand) -> tuple[Tensor, Tensor]:
    like = a if isinstance(a, Tensor) else b if isinstance(b, Tensor) else None
    return as_tensor(a, like), as_tensor(b, like)


# ----------------- BINÁRIAS -----------------
def add(a: Operand, b: Operand) -> Tensor:
    ta, tb = _pair(a, b)
    _broadcast_shape(ta, tb)
    return record(
        "add",
        ta.data + tb.data,
        (ta, tb),
        lambda g: (unbroadcast(g, ta.shape), unbroadcast(g, tb.shape)),
    )


def sub(a: Operand, b: Operand) -> Tensor:
    ta, tb = _pair(a, b)
    _broadcast_shape(ta, tb)
    return record(
        "sub",
        ta.data - tb.data,
        (ta, tb),
        lambda g: (unbroadcast(g, ta.shape), unbroadcast(-g, tb.shape)),
    )


def mul(a: Operand, b: Operand) -> Tensor:
    ta, tb = _pair(a, b)
    _broadcast_shape(ta, tb)
    return record(
        "mul",
        ta.data * tb.data,
        (ta, tb),
        lambda g: (unbroadcast(g * tb.data, ta.shape), unbroadcast(g * ta.data, tb.shape)),
    )


def div(a: Operand, b: Operand) -> Tensor:
    ta, tb = _pair(a, b)
    _broadcast_shape(ta, tb)
    mode = get_mode()
    denom = tb.data
    if np.any(denom == 0):
        if mode.strict:
            raise NumericError("divisão por zero em modo estrito")
        denom = np.where(np.abs(denom) < mode.eps, np.where(denom < 0, -mode.eps, mode.eps), denom)
    return record(
        "div",
        ta.data / denom,
        (ta, tb),
        lambda g: (
            unbroadcast(g / denom, ta.shape),
            unbroadcast(-g * ta.data / (denom * denom), tb.shape),
        ),
    )


# ----------------- UNÁRIAS -----------------
def sigmoid(a: Tensor) -> Tensor:
    s = 0.5 * (1.0 + np.tanh(0.5 * a.data))  # estável para |x| grande
    return record("sigmoid", s, (a,), lambda g: (g * s * (1.0 - s),))


def tanh(a: Tensor) -> Tensor:
    t = np.tanh(a.data)
    return record("tanh", t, (a,), lambda g: (g * (1.0 - t * t),))


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    note_branch(mask)
    return record("relu", np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,))


def abs(a: Tensor) -> Tensor:  # noqa: A001
    sign = np.sign(a.data)
    note_branch(sign)
    return record("abs", np.abs(a.data), (a,), lambda g: (g * sign,))


def exp(a: Tensor) -> Tensor:
    e = np.exp(a.data)
    return record("exp", e, (a,), lambda g: (g * e,))


def log(a: Tensor) -> Tensor:
    mode = get_mode()
    x = a.data
    if np.any(x <= 0):
        if mode.strict:
            raise NumericError("log de valor não positivo em modo estrito")
        x = np.maximum(x, mode.eps)
    return record("log", np.log(x), (a,), lambda g: (g / x,))


def sqrt(a: Tensor) -> Tensor:
    mode = get_mode()
    x = a.data
    if np.any(x < 0):
        if mode.strict:
            raise NumericError("sqrt de valor negativo em modo estrito")
    if not mode.strict:
        x = np.maximum(x, mode.eps)
    r = np.sqrt(x)
    return record("sqrt", r, (a,), lambda g: (g / (2.0 * r),))


def square(a: Tensor) -> Tensor:
    return record("square", a.data * a.data, (a,), lambda g: (2.0 * g * a.data,))


def clamp_min(a: Tensor, floor: float) -> Tensor:
    mask = a.data > floor
    note_branch(mask)
    return record("clamp_min", np.where(mask, a.data, floor), (a,), lambda g: (g * mask,))


_UNARY = {
    "sigmoid": sigmoid,
    "relu": relu,
    "abs": abs,
    "exp": exp,
    "log": log,
    "square": square,
    "sqrt": sqrt,
    "tanh": tanh,
}
_BINARY = {"add": add, "sub": sub, "mul": mul, "div": div}


def elementwise(op: ElementwiseOp, a: Operand, b: Operand | None = None) -> Tensor:
    """Despacho por nome, útil para o gradcheck percorrer todas as operações."""
    if op in _BINARY:
        if b is None:
            raise ShapeError(f"operação binária '{op}' exige dois operandos")
        return _BINARY[op](a, b)
    if op in _UNARY:
        return _UNARY[op](as_tensor(a))
    raise ShapeError(f"operação desconhecida: {op}")


# ----------------- REDUÇÕES E SHAPE -----------------
def _norm_axes(axis: int | tuple[int, ...] | None, ndim: int) -> tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    axes = (axis,) if isinstance(axis, int) else axis
    return tuple(ax % ndim for ax in axes)


def sum(  # noqa: A001
    a: Tensor, axis: int | tuple[int, ...] | None = None, keepdims: bool = False
) -> Tensor:
    axes = _norm_axes(axis, a.ndim)
    out = a.data.sum(axis=axes, keepdims=keepdims)

    def vjp(g: Array) -> tuple[Array]:
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, a.shape).copy(),)

    return record("sum", out, (a,), vjp)


def mean(a: Tensor, axis: int | tuple[int, ...] | None = None, keepdims: bool = False) -> Tensor:
    axes = _norm_axes(axis, a.ndim)
    count = int(np.prod([a.shape[ax] for ax in axes])) if axes else 1
    return mul(sum(a, axis=axes, keepdims=keepdims), 1.0 / count)


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    try:
        out = a.data.reshape(tuple(shape))
    except ValueError as e:
        raise ShapeError(f"reshape impossível: {a.shape} -> {tuple(shape)}") from e
    return record("reshape", out, (a,), lambda g: (g.reshape(a.shape),))


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    if not tensors:
        raise ShapeError("concat exige ao menos um tensor")
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as e:
        raise ShapeError(f"concat com shapes incompatíveis: {[t.shape for t in tensors]}") from e
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]
    return record("concat", out, tuple(tensors), lambda g: np.split(g, bounds, axis=axis))


# ----------------- CONVOLUÇÃO -----------------
def conv2d(
    x: Tensor,
    weight: Tensor,
    bias: Tensor | None = None,
    stride: int = 1,
    padding: int = 0,
) -> Tensor:
    """Correlação cruzada (sem flip do kernel).

    x: H×W×Cin, weight: k×k×Cin×Cout, bias: Cout.
    """
    if x.ndim != 3 or weight.ndim != 4:
        raise ShapeError(
            f"conv2d espera x H×W×C e weight k×k×Cin×Cout, recebeu {x.shape}, {weight.shape}"
        )
    k, k2, cin, cout = weight.shape
    if k != k2 or k % 2 == 0:
        raise ShapeError(f"kernel deve ser quadrado e ímpar, recebeu {k}×{k2}")
    if cin != x.shape[2]:
        raise ShapeError(f"canais de entrada {x.shape[2]} != canais do kernel {cin}")
    if bias is not None and bias.shape != (cout,):
        raise ShapeError(f"bias deve ter shape ({cout},), recebeu {bias.shape}")
    if stride < 1 or padding < 0:
        raise ShapeError(f"stride >= 1 e padding >= 0 (stride={stride}, padding={padding})")

    h, w = x.shape[:2]
    span_h, span_w = h + 2 * padding - k, w + 2 * padding - k
    if span_h < 0 or span_w < 0 or span_h % stride or span_w % stride:
        raise ShapeError(
            f"saída não inteira: (H + 2p - k)/s com H={h}, W={w}, k={k}, p={padding}, s={stride}"
        )
    ho, wo = span_h // stride + 1, span_w // stride + 1

    xp = np.pad(x.data, ((padding, padding), (padding, padding), (0, 0)))
    wd = weight.data

    def window(i: int, j: int) -> tuple[slice, slice]:
        return (
            slice(i, i + stride * (ho - 1) + 1, stride),
            slice(j, j + stride * (wo - 1) + 1, stride),
        )

    out = np.zeros((ho, wo, cout), dtype=np.result_type(x.data, wd))
    for i in range(k):
        for j in range(k):
            sy, sx = window(i, j)
            out += xp[sy, sx, :] @ wd[i, j]
    if bias is not None:
        out += bias.data

    def vjp(g: Array) -> tuple[Array, Array, Array | None]:
        gxp = np.zeros_like(xp)
        gw = np.zeros_like(wd)
        for i in range(k):
            for j in range(k):
                sy, sx = window(i, j)
                gw[i, j] = np.tensordot(xp[sy, sx, :], g, axes=([0, 1], [0, 1]))
                gxp[sy, sx, :] += g @ wd[i, j].T
        gx = gxp[padding : padding + h, padding : padding + w, :]
        gb = g.sum(axis=(0, 1)) if bias is not None else None
        return gx, gw, gb

    parents: tuple[Tensor, ...] = (x, weight) if bias is None else (x, weight, bias)
    return record("conv2d", out, parents, vjp)


# ----------------- POOLING / REAMOSTRAGEM -----------------
def global_avg_pool(x: Tensor) -> Tensor:
    """Média por canal: H×W×C -> 1×1×C."""
    if x.ndim != 3 or x.shape[0] < 1 or x.shape[1] < 1:
        raise ShapeError(f"global_avg_pool espera H×W×C com H, W >= 1, recebeu {x.shape}")
    return mean(x, axis=(0, 1), keepdims=True)


def _interp_matrix(n_in: int, factor: int, dtype: Any) -> Array:
    """Pesos de interpolação linear (convenção de meio pixel, bordas replicadas)."""
    n_out = n_in * factor
    src = (np.arange(n_out) + 0.5) / factor - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    i0 = np.floor(src).astype(int)
    i1 = np.minimum(i0 + 1, n_in - 1)
    frac = src - i0
    m = np.zeros((n_out, n_in), dtype=dtype)
    m[np.arange(n_out), i0] += 1.0 - frac
    m[np.arange(n_out), i1] += frac
    return m


def upsample_bilinear(x: Tensor, factor: int) -> Tensor:
    """H×W×C -> (H·f)×(W·f)×C por interpolação bilinear."""
    if x.ndim != 3 or factor < 1:
        raise ShapeError(f"upsample espera H×W×C e fator >= 1, recebeu {x.shape}, {factor}")
    my = _interp_matrix(x.shape[0], factor, x.dtype)
    mx = _interp_matrix(x.shape[1], factor, x.dtype)
    out = np.einsum("Yy,yxc,Xx->YXc", my, x.data, mx)
    return record(
        "upsample_bilinear",
        out,
        (x,),
        lambda g: (np.einsum("Yy,YXc,Xx->yxc", my, g, mx),),
    )


def avg_pool2d(x: Tensor, factor: int) -> Tensor:
    """Média em blocos factor×factor sem sobreposição: H×W×C -> (H/f)×(W/f)×C."""
    if x.ndim != 3 or factor < 1:
        raise ShapeError(f"avg_pool2d espera H×W×C e fator >= 1, recebeu {x.shape}, {factor}")
    h, w, c = x.shape
    if h % factor or w % factor:
        raise ShapeError(
            f"dimensões {h}×{w} não divisíveis por {factor}; aplique padding antes"
        )
    out = x.data.reshape(h // factor, factor, w // factor, factor, c).mean(axis=(1, 3))
    area = float(factor * factor)
    return record(
        "avg_pool2d",
        out,
        (x,),
        lambda g: (np.repeat(np.repeat(g, factor, axis=0), factor, axis=1) / area,),
    )
