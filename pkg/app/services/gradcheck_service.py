"""Bateria de gradcheck: backward contra diferenças finitas centrais em modo oracle (f64).

Cada caso monta entradas aleatórias e devolve uma perda escalar; o resultado
guarda o erro relativo por tensor. Casos de operações isoladas usam entradas
longe das quinas (relu, abs, floor da interpolação); na perda completa do aluno,
posições cujo passo de diferenças finitas cruza uma quina são trocadas.
"""
from __future__ import annotations

import logging
from collections.abc import Callable, Iterable
from dataclasses import dataclass

import numpy as np

from app.core.errors import ConfigError
from app.networks.cfd import build_model
from app.networks.converter import FeatureConverter
from app.networks.matcher import UpdateBlock, build_correlation, window_lookup
from app.schemas.experiment import LossConfig, ModelConfig
from app.schemas.scene import CameraRig
from app.services.dataset_service import generate_scene
from app.services.losses import channel_norm_distance, student_total_loss
from app.tensor import Tensor, numeric_mode
from app.tensor import ops
from app.tensor.gradcheck import GradcheckResult, check_gradients

logger = logging.getLogger("cfdstereo.gradcheck")

DEFAULT_TOLERANCE = 1e-5
DEFAULT_EPS = 1e-4
FULL_LOSS_TOLERANCE = 1e-4
DEFAULT_INSTANCES = 20

LossFn = Callable[[], Tensor]
CaseBuilder = Callable[[np.random.Generator], "tuple[LossFn, dict[str, Tensor]]"]


@dataclass(frozen=True)
class GradCase:
    name: str
    build: CaseBuilder
    max_entries: int | None = None
    tolerance: float = DEFAULT_TOLERANCE
    joint: bool = False


_CASES: list[GradCase] = []


def _case(
    name: str,
    max_entries: int | None = None,
    tolerance: float = DEFAULT_TOLERANCE,
    joint: bool = False,
) -> Callable[[CaseBuilder], CaseBuilder]:
    def register(build: CaseBuilder) -> CaseBuilder:
        _CASES.append(GradCase(name, build, max_entries, tolerance, joint))
        return build

    return register


def case_names() -> list[str]:
    return [c.name for c in _CASES]


# ----------------- ENTRADAS -----------------
def _param(rng: np.random.Generator, *shape: int, low: float = -1.0, high: float = 1.0) -> Tensor:
    return Tensor(rng.uniform(low, high, size=shape), requires_grad=True)


def _away_from_zero(rng: np.random.Generator, *shape: int, margin: float = 0.2) -> Tensor:
    sign = rng.choice([-1.0, 1.0], size=shape)
    return Tensor(sign * rng.uniform(margin, 1.0, size=shape), requires_grad=True)


def _readout(rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
    # pesos fixos na saída: a perda escalar depende de todas as entradas
    return rng.normal(size=shape)


# ----------------- CONVOLUÇÃO -----------------
@_case("conv2d_stride1")
def _conv_stride1(rng: np.random.Generator) -> tuple[LossFn, dict[str, Tensor]]:
    x, w, b = _param(rng, 5, 6, 2), _param(rng, 3, 3, 2, 3), _param(rng, 3)
    readout = _readout(rng, (5, 6, 3))
    return lambda: (ops.conv2d(x, w, b, stride=1, padding=1) * readout).sum(), {
        "input": x, "weight": w, "bias": b,
    }


@_case("conv2d_stride2")
def _conv_stride2(rng: np.random.Generator) -> tuple[LossFn, dict[str, Tensor]]:
    x, w, b = _param(rng, 7, 9, 2), _param(rng, 3, 3, 2, 2), _param(rng, 2)
    readout = _readout(rng, (4, 5, 2))
    return lambda: (ops.conv2d(x, w, b, stride=2, padding=1) * readout).sum(), {
        "input": x, "weight": w, "bias": b,
    }


@_case("conv2d_1x1_nobias")
def _conv_pointwise(rng: np.random.Generator) -> tuple[LossFn, dict[str, Tensor]]:
    x, w = _param(rng, 4, 4, 3), _param(rng, 1, 1, 3, 2)
    readout = _readout(rng, (4, 4, 2))
    return lambda: (ops.conv2d(x, w) * readout).sum(), {"input": x, "weight": w}


# ----------------- ELEMENTO A ELEMENTO -----------------
def _unary(op: str, make: Callable[[np.random.Generator], Tensor]) -> CaseBuilder:
    def build(rng: np.random.Generator) -> tuple[LossFn, dict[str, Tensor]]:
        x = make(rng)
        readout = _readout(rng, x.shape)
        return lambda: (ops.elementwise(op, x) * readout).sum(), {"x": x}

    return build


for _op, _make in (
    ("sigmoid", lambda r: _param(r, 3, 4, 2, low=-3, high=3)),
    ("tanh", lambda r: _param(r, 3, 4, 2, low=-2, high=2)),
    ("relu", lambda r: _away_from_zero(r, 3, 4, 2)),
    ("abs", lambda r: _away_from_zero(r, 3, 4, 2)),
    ("exp", lambda r: _param(r, 3, 4, 2)),
    ("log", lambda r: _param(r, 3, 4, 2, low=0.5, high=2.0)),
    ("sqrt", lambda r: _param(r, 3, 4, 2, low=0.5, high=2.0)),
    ("square", lambda r: _param(r, 3, 4, 2)),
):
    _case(_op)(_unary(_op, _make))
del _op, _make


def _binary(op: str, positive_rhs: bool = False) -> CaseBuilder:
    def build(rng: np.random.Generator) -> tuple[LossFn, dict[str, Tensor]]:
        a = _param(rng, 3, 4, 2)
        b = _param(rng, 1, 4, 1, low=0.5, high=2.0) if positive_rhs else _param(rng, 1, 4, 1)
        readout = _readout(rng, (3, 4, 2))
        return lambda: (ops.elementwise(op, a, b) * readout).sum(), {"a": a, "b": b}

    return build


# operandos com shapes diferentes exercitam o broadcasting no vjp
for _op in ("add", "sub", "mul"):
    _case(f"{_op}_broadcast")(_binary(_op))
del _op
_case("div_broadcast")(_binary("div", positive_rhs=True))


@_case("clamp_min")
def _clamp(rng: np.random.Generator) -> tuple[LossFn, dict[str, Tensor]]:
    x = _away_from_zero(rng, 4, 5, 1)
    readout = _readout(rng, x.shape)
    return lambda: (ops.clamp_min(x, 0.0) * readout).sum(), {"x": x}


# ----------------- REDUÇÕES / SHAPE -----------------
@_case("sum_mean_axes")
def _reductions(rng: np.random.Generator) -> tuple[LossFn, dict[str, Tensor]]:
    x = _param(rng, 3, 4, 5)
    p1, p2 = _readout(rng, (3, 5)), _readout(rng, (1, 4, 1))

    def loss() -> Tensor:
        return (x.sum(axis=1) * p1).sum() + (x.mean(axis=(0, 2), keepdims=True) * p2).sum()

    return loss, {"x": x}


@_case("concat_reshape")
def _concat(rng: np.random.Generator) -> tuple[LossFn, dict[str, Tensor]]:
    a, b = _param(rng, 3, 4, 2), _param(rng, 3, 4, 1)
    readout = _readout(rng, (4, 9))
    return lambda: (ops.concat([a, b], axis=-1).reshape(4, 9) * readout).sum(), {"a": a, "b": b}


# ----------------- POOLING / REAMOSTRAGEM -----------------
@_case("global_avg_pool")
def _gap(rng: np.random.Generator) -> tuple[LossFn, dict[str, Tensor]]:
    x = _param(rng, 4, 6, 3)
    readout = _readout(rng, (1, 1, 3))
    return lambda: (ops.global_avg_pool(x) * readout).sum(), {"x": x}


@_case("avg_pool2d")
def _pool(rng: np.random.Generator) -> tuple[LossFn, dict[str, Tensor]]:
    x = _param(rng, 4, 6, 2)
    readout = _readout(rng, (2, 3, 2))
    return lambda: (ops.avg_pool2d(x, 2) * readout).sum(), {"x": x}


@_case("upsample_bilinear")
def _upsample(rng: np.random.Generator) -> tuple[LossFn, dict[str, Tensor]]:
    x = _param(rng, 3, 4, 2)
    readout = _readout(rng, (12, 16, 2))
    return lambda: (ops.upsample_bilinear(x, 4) * readout).sum(), {"x": x}


# ----------------- CORRELAÇÃO -----------------
@_case("correlation")
def _correlation(rng: np.random.Generator) -> tuple[LossFn, dict[str, Tensor]]:
    left, right = _param(rng, 3, 8, 4), _param(rng, 3, 8, 4)
    readout = _readout(rng, (3, 8, 4))
    return lambda: (build_correlation(left, right, 3) * readout).sum(), {
        "left": left, "right": right,
    }


@_case("window_lookup")
def _lookup(rng: np.random.Generator) -> tuple[LossFn, dict[str, Tensor]]:
    volume = _param(rng, 3, 5, 6)
    # posições não inteiras: frações em [0.2, 0.8]
    base = rng.integers(-1, 6, size=(3, 5, 1)).astype(np.float64)
    disp = Tensor(base + rng.uniform(0.2, 0.8, size=(3, 5, 1)), requires_grad=True)
    readout = _readout(rng, (3, 5, 5))
    return lambda: (window_lookup(volume, disp, 2) * readout).sum(), {
        "volume": volume, "disp": disp,
    }


@_case("correlation_lookup")
def _corr_lookup(rng: np.random.Generator) -> tuple[LossFn, dict[str, Tensor]]:
    left, right = _param(rng, 2, 8, 3), _param(rng, 2, 8, 3)
    disp = Tensor(rng.uniform(0.2, 0.8, size=(2, 8, 1)) + 1.0, requires_grad=True)
    readout = _readout(rng, (2, 8, 3))

    def loss() -> Tensor:
        return (window_lookup(build_correlation(left, right, 4), disp, 1) * readout).sum()

    return loss, {"left": left, "right": right, "disp": disp}


# ----------------- MÓDULOS -----------------
def _converter_case(attention_input: str) -> CaseBuilder:
    def build(rng: np.random.Generator) -> tuple[LossFn, dict[str, Tensor]]:
        converter = FeatureConverter(3, rng, attention_input)  # type: ignore[arg-type]
        f = _param(rng, 4, 6, 3)
        readout = _readout(rng, (4, 6, 3))
        inputs: dict[str, Tensor] = {"features": f, **dict(converter.named_parameters())}
        return lambda: (converter(f) * readout).sum(), inputs

    return build


_case("converter_branch")(_converter_case("branch"))
_case("converter_input")(_converter_case("input"))


@_case("update_block")
def _update(rng: np.random.Generator) -> tuple[LossFn, dict[str, Tensor]]:
    block = UpdateBlock(3, 1, rng)
    hidden, context = _param(rng, 3, 4, 3), _param(rng, 3, 4, 3)
    corr = _param(rng, 3, 4, 3)
    disp = Tensor(rng.uniform(0.5, 2.0, size=(3, 4, 1)))

    def loss() -> Tensor:
        _, delta = block(hidden, context, corr, disp)
        return delta.square().sum()

    inputs: dict[str, Tensor] = {"hidden": hidden, "corr": corr, **dict(block.named_parameters())}
    return loss, inputs


@_case("channel_norm_distance")
def _distance(rng: np.random.Generator) -> tuple[LossFn, dict[str, Tensor]]:
    a, b = _param(rng, 4, 5, 3), _param(rng, 4, 5, 3)
    return lambda: channel_norm_distance(a, b), {"a": a, "b": b}


@_case("student_total_loss", max_entries=2, tolerance=FULL_LOSS_TOLERANCE, joint=True)
def _student_loss(rng: np.random.Generator) -> tuple[LossFn, dict[str, Tensor]]:
    config = ModelConfig(channels=4, downsample=4, iters=2, max_disp=3, radius=1)
    scene = generate_scene(rng, "gradcheck", 16, 32, (1, 3), CameraRig(), layers=(2, 3))
    teacher = build_model("teacher", config, rng)
    teacher.freeze()
    student = build_model("student", config, rng)
    weights = LossConfig()

    def loss() -> Tensor:
        return student_total_loss(scene, student, teacher, weights)[0]  # type: ignore[arg-type]

    return loss, dict(student.named_parameters())


# ----------------- EXECUÇÃO -----------------
def _check_case(
    case: GradCase, seed: int, instances: int, eps: float, tolerance: float
) -> GradcheckResult:
    merged = GradcheckResult(name=case.name, tolerance=tolerance)
    for k in range(instances):
        rng = np.random.default_rng([seed, k])
        loss_fn, inputs = case.build(rng)
        result = check_gradients(
            case.name,
            loss_fn,
            inputs,
            eps=eps,
            tolerance=tolerance,
            max_entries=case.max_entries,
            skip_kinks=True,
            joint=case.joint,
            rng=rng,
        )
        for key, err in result.errors.items():
            merged.errors[key] = max(err, merged.errors.get(key, 0.0))
        for key, n in result.skipped.items():
            merged.skipped[key] = merged.skipped.get(key, 0) + n
    return merged


def run_gradcheck(
    seed: int = 0,
    *,
    tolerance: float | None = None,
    eps: float = DEFAULT_EPS,
    instances: int = DEFAULT_INSTANCES,
    only: Iterable[str] | None = None,
) -> list[GradcheckResult]:
    """Roda os casos selecionados (todos por padrão) em modo oracle.

    Cada caso é sorteado `instances` vezes a partir de `seed`; o erro
    reportado por tensor é o pior entre as instâncias. `tolerance` substitui
    a tolerância própria de cada caso.
    """
    if instances < 1:
        raise ConfigError(f"instances deve ser >= 1, recebeu {instances}")
    selected = _CASES
    if only is not None:
        wanted = set(only)
        unknown = wanted - set(case_names())
        if unknown:
            raise ConfigError(f"casos de gradcheck desconhecidos: {sorted(unknown)}")
        selected = [c for c in _CASES if c.name in wanted]

    results: list[GradcheckResult] = []
    with numeric_mode("oracle"):
        for case in selected:
            tol = case.tolerance if tolerance is None else tolerance
            result = _check_case(case, seed, instances, eps, tol)
            if result.passed:
                logger.debug("gradcheck %s ok (erro máx %.3e)", case.name, result.max_error)
            else:
                logger.error(
                    "gradcheck %s falhou: erro máx %.3e >= %.1e",
                    case.name, result.max_error, tol,
                )
            results.append(result)
    return results
