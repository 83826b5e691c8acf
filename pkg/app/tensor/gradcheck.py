"""Oráculo de diferenças finitas centrais para o autodiff."""
from __future__ import annotations

import logging
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

import numpy as np

from app.tensor.tensor import Array, Tensor, backward, branch_trace, no_grad, tape_scope

logger = logging.getLogger("cfdstereo.gradcheck")

ScalarFn = Callable[[Tensor], "Tensor | float"]


def _scalar(value: Tensor | float) -> float:
    return value.item() if isinstance(value, Tensor) else float(value)


def finite_diff_grad(
    f: ScalarFn,
    x: Tensor,
    eps: float = 1e-4,
    indices: Sequence[int] | None = None,
) -> Tensor:
    """(f(x + εeᵢ) − f(x − εeᵢ)) / 2ε por elemento.

    `x` é perturbado in-place e restaurado. Com `indices`, apenas essas
    posições (índices planos) são estimadas; as demais ficam em zero.
    """
    flat = x.data.reshape(-1)
    grad = np.zeros(flat.shape, dtype=np.float64)
    positions = range(flat.size) if indices is None else indices
    with no_grad():
        for idx in positions:
            original = flat[idx]
            flat[idx] = original + eps
            f_plus = _scalar(f(x))
            flat[idx] = original - eps
            f_minus = _scalar(f(x))
            flat[idx] = original
            grad[idx] = (f_plus - f_minus) / (2.0 * eps)
    return Tensor(grad.reshape(x.shape), dtype=x.dtype)


def _same_branches(a: list[Array], b: list[Array]) -> bool:
    return len(a) == len(b) and all(np.array_equal(p, q) for p, q in zip(a, b))


def smooth_finite_diff(
    f: ScalarFn,
    x: Tensor,
    indices: Sequence[int],
    eps: float = 1e-4,
) -> dict[int, float]:
    """Diferenças centrais só nas posições em que x ± ε escolhe os mesmos ramos.

    Uma posição cujo passo cruza uma quina (relu, abs, clamp, célula do
    lookup) fica de fora do resultado.
    """
    flat = x.data.reshape(-1)
    estimates: dict[int, float] = {}
    with no_grad():
        for idx in indices:
            original = flat[idx]
            flat[idx] = original + eps
            with branch_trace() as plus:
                f_plus = _scalar(f(x))
            flat[idx] = original - eps
            with branch_trace() as minus:
                f_minus = _scalar(f(x))
            flat[idx] = original
            if _same_branches(plus, minus):
                estimates[idx] = (f_plus - f_minus) / (2.0 * eps)
    return estimates


def relative_error(analytic: Array, numeric: Array) -> float:
    """‖a − n‖ / max(‖a‖ + ‖n‖, 1e−12)."""
    a = np.asarray(analytic, dtype=np.float64).reshape(-1)
    n = np.asarray(numeric, dtype=np.float64).reshape(-1)
    return float(np.linalg.norm(a - n) / max(np.linalg.norm(a) + np.linalg.norm(n), 1e-12))


@dataclass
class GradcheckResult:
    name: str
    errors: dict[str, float] = field(default_factory=dict)
    tolerance: float = 1e-5
    skipped: dict[str, int] = field(default_factory=dict)

    @property
    def max_error(self) -> float:
        return max(self.errors.values(), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_error < self.tolerance


def check_gradients(
    name: str,
    loss_fn: Callable[[], Tensor],
    inputs: dict[str, Tensor],
    *,
    eps: float = 1e-4,
    tolerance: float = 1e-5,
    max_entries: int | None = None,
    skip_kinks: bool = False,
    joint: bool = False,
    rng: np.random.Generator | None = None,
) -> GradcheckResult:
    """Compara `backward` com diferenças finitas para cada tensor de `inputs`.

    Com `max_entries`, amostra no máximo essa quantidade de posições por tensor.
    Com `skip_kinks`, posições cujo passo cruza uma quina são trocadas por
    outras do mesmo tensor. Com `joint`, o erro é medido no vetor que concatena
    as posições de todos os tensores (chave `all`).
    """
    rng = rng or np.random.default_rng(0)
    for t in inputs.values():
        t.zero_grad()
    with tape_scope():
        loss = loss_fn()
        backward(loss)

    result = GradcheckResult(name=name, tolerance=tolerance)
    picked: list[tuple[Array, Array]] = []
    for key, t in inputs.items():
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        if skip_kinks:
            pair = _smooth_entries(result, key, t, analytic, loss_fn, eps, max_entries, rng)
            if joint:
                picked.append(pair)
            elif pair[0].size:
                result.errors[key] = relative_error(*pair)
                logger.debug("gradcheck %s/%s: erro relativo %.3e", name, key, result.errors[key])
            continue
        indices: list[int] | None = None
        if max_entries is not None and t.size > max_entries:
            indices = sorted(rng.choice(t.size, size=max_entries, replace=False).tolist())
        numeric = finite_diff_grad(lambda _x: loss_fn(), t, eps=eps, indices=indices)
        if indices is None:
            err = relative_error(analytic, numeric.data)
        else:
            err = relative_error(analytic.reshape(-1)[indices], numeric.data.reshape(-1)[indices])
        result.errors[key] = err
        logger.debug("gradcheck %s/%s: erro relativo %.3e", name, key, err)
    if picked:
        analytic_all = np.concatenate([a for a, _ in picked])
        numeric_all = np.concatenate([n for _, n in picked])
        result.errors["all"] = relative_error(analytic_all, numeric_all)
        logger.debug("gradcheck %s: erro relativo conjunto %.3e", name, result.errors["all"])
    return result


def _smooth_entries(
    result: GradcheckResult,
    key: str,
    t: Tensor,
    analytic: Array,
    loss_fn: Callable[[], Tensor],
    eps: float,
    max_entries: int | None,
    rng: np.random.Generator,
) -> tuple[Array, Array]:
    wanted = t.size if max_entries is None else min(max_entries, t.size)
    order = rng.permutation(t.size).tolist()
    estimates: dict[int, float] = {}
    tried = 0
    while len(estimates) < wanted and tried < t.size:
        batch = order[tried : tried + wanted - len(estimates)]
        tried += len(batch)
        estimates.update(smooth_finite_diff(lambda _x: loss_fn(), t, batch, eps=eps))
    result.skipped[key] = tried - len(estimates)
    if not estimates:
        logger.warning("gradcheck %s/%s: todas as posições cruzam quinas", result.name, key)
    elif result.skipped[key]:
        logger.debug(
            "gradcheck %s/%s: %d posições em quina trocadas",
            result.name, key, result.skipped[key],
        )
    indices = sorted(estimates)
    numeric = np.array([estimates[i] for i in indices], dtype=np.float64)
    return analytic.reshape(-1)[indices].astype(np.float64), numeric
