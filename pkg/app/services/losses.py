"""Funções de perda do treino professor-aluno."""
from __future__ import annotations

from collections.abc import Sequence
from dataclasses import asdict, dataclass
from typing import Any

import numpy as np
from numpy.typing import NDArray

from app.core.errors import NumericError, ShapeError
from app.networks.cfd import StudentModel, TeacherModel
from app.schemas.experiment import LossConfig
from app.schemas.scene import StereoScene
from app.tensor import Tensor
from app.tensor import ops

NORM_FLOOR = 1e-6  # norma mínima de um canal em `channel_norm_distance`


# ----------------- DISPARIDADE -----------------
def masked_l1(pred: Tensor, gt: NDArray[Any], mask: NDArray[np.bool_]) -> Tensor:
    """Média de |pred − gt| nos pixels válidos."""
    if pred.shape != gt.shape or gt.shape != mask.shape:
        raise ShapeError(
            f"pred {pred.shape}, gt {gt.shape} e máscara {mask.shape} devem coincidir"
        )
    count = int(mask.sum())
    if count == 0:
        raise NumericError("máscara de validade vazia")
    return ((pred - np.where(mask, gt, 0.0)).abs() * mask.astype(np.float64)).sum() / float(count)


def disparity_seq_loss(
    preds: Sequence[Tensor],
    gt: NDArray[Any],
    gamma: float,
    mask: NDArray[np.bool_] | None = None,
) -> Tensor:
    """Σᵢ γ^(K−i) · mean_mask|d_gt − d̂ᵢ|, i = 1..K; a última predição tem peso 1."""
    if not preds:
        raise ShapeError("sequência de predições vazia")
    gt = np.asarray(gt)
    mask = np.ones(gt.shape, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    k = len(preds)
    total: Tensor | None = None
    for i, pred in enumerate(preds, start=1):
        term = masked_l1(pred, gt, mask) * gamma ** (k - i)
        total = term if total is None else total + term
    assert total is not None
    return total


# ----------------- FEATURES -----------------
def _normalize_channels(f: Tensor) -> Tensor:
    # cada mapa de canal vira vetor unitário sobre (H, W); canal nulo fica nulo
    sumsq = f.square().sum(axis=(0, 1), keepdims=True)
    return f / ops.sqrt(ops.clamp_min(sumsq, NORM_FLOOR**2))


def channel_norm_distance(f1: Tensor, f2: Tensor) -> Tensor:
    """D(F₁, F₂) = (1/C) Σᵢ ‖F₁ᵢ − F₂ᵢ‖², canais normalizados; D ∈ [0, 4]."""
    if f1.shape != f2.shape or f1.ndim != 3:
        raise ShapeError(f"features incompatíveis: {f1.shape} vs {f2.shape}")
    diff = _normalize_channels(f1) - _normalize_channels(f2)
    return diff.square().sum() * (1.0 / f1.shape[2])


def triplet_contrastive_loss(
    anchor: Tensor, positive: Tensor, negative: Tensor, margin: float = 1.0
) -> Tensor:
    """max(D(a, p) − D(a, n) + m, 0)."""
    if margin <= 0:
        raise NumericError(f"margem deve ser positiva, recebeu {margin}")
    d_pos = channel_norm_distance(anchor, positive)
    d_neg = channel_norm_distance(anchor, negative)
    return (d_pos - d_neg + margin).relu()


def distillation_loss(teacher_fused: Tensor, student_clean: Tensor, student_fog: Tensor) -> Tensor:
    """mean|T − S_clean| + mean|T − S_fog|; o alvo do professor não recebe gradiente."""
    if not teacher_fused.shape == student_clean.shape == student_fog.shape:
        raise ShapeError(
            f"features incompatíveis: {teacher_fused.shape}, "
            f"{student_clean.shape}, {student_fog.shape}"
        )
    target = teacher_fused.detach()
    return (target - student_clean).abs().mean() + (target - student_fog).abs().mean()


# ----------------- PERDAS TOTAIS -----------------
@dataclass
class LossBreakdown:
    """Termos já ponderados; `total` é a soma de disp_clean, disp_fog, dist e cont.

    `epe` (erro da última predição) só acompanha o log, fora da soma.
    """

    disp_clean: float = 0.0
    disp_fog: float = 0.0
    dist: float = 0.0
    cont: float = 0.0
    total: float = 0.0
    epe: float = 0.0

    def as_dict(self) -> dict[str, float]:
        return asdict(self)

    def __add__(self, other: "LossBreakdown") -> "LossBreakdown":
        return LossBreakdown(
            *(a + b for a, b in zip(self.as_dict().values(), other.as_dict().values()))
        )

    def scaled(self, factor: float) -> "LossBreakdown":
        return LossBreakdown(*(v * factor for v in self.as_dict().values()))


def teacher_loss(
    scene: StereoScene, teacher: TeacherModel, weights: LossConfig, iters: int | None = None
) -> tuple[Tensor, LossBreakdown]:
    out = teacher.forward(scene.pair("clean"), scene.pair("fog"), iters=iters)
    loss = disparity_seq_loss(out.seq.preds, scene.disp_left, weights.gamma, scene.valid_left)
    value = loss.item()
    epe = _final_epe(out.seq.final, scene)
    return loss, LossBreakdown(disp_clean=value, total=value, epe=epe)


def student_total_loss(
    scene: StereoScene,
    student: StudentModel,
    teacher: TeacherModel | None,
    weights: LossConfig,
    *,
    domains: Sequence[str] = ("clean", "fog"),
    use_dist: bool = True,
    use_cont: bool = True,
    iters: int | None = None,
) -> tuple[Tensor, LossBreakdown]:
    """L_disp(limpo) + L_disp(névoa) + λ₁·L_Dist + λ₂·L_Cont.

    `domains` restringe a supervisão de disparidade (braços C e F da
    ablação). Dist e Cont exigem os dois domínios e são a média das vistas
    esquerda e direita.
    """
    if (use_dist or use_cont) and set(domains) != {"clean", "fog"}:
        raise ShapeError("Dist/Cont exigem os domínios limpo e névoa")
    if use_dist and teacher is None:
        raise ShapeError("perda de destilação exige o modelo professor")

    outputs = {domain: student.forward(scene.pair(domain), iters=iters) for domain in domains}
    terms: dict[str, Tensor] = {}
    for domain, out in outputs.items():
        terms[f"disp_{domain}"] = disparity_seq_loss(
            out.seq.preds, scene.disp_left, weights.gamma, scene.valid_left
        )

    if use_dist and weights.lambda1 > 0:
        assert teacher is not None
        clean, fog = outputs["clean"], outputs["fog"]
        fused_l = teacher.fuse(scene.clean_left, _require(scene.fog_left))
        fused_r = teacher.fuse(scene.clean_right, _require(scene.fog_right))
        dist = (
            distillation_loss(fused_l, clean.converted_left, fog.converted_left)
            + distillation_loss(fused_r, clean.converted_right, fog.converted_right)
        ) * 0.5
        terms["dist"] = dist * weights.lambda1

    if use_cont and weights.lambda2 > 0:
        clean, fog = outputs["clean"], outputs["fog"]
        cont = (
            triplet_contrastive_loss(
                fog.converted_left, clean.converted_left, fog.raw_left, weights.margin
            )
            + triplet_contrastive_loss(
                fog.converted_right, clean.converted_right, fog.raw_right, weights.margin
            )
        ) * 0.5
        terms["cont"] = cont * weights.lambda2

    total: Tensor | None = None
    for key in ("disp_clean", "disp_fog", "dist", "cont"):
        if key in terms:
            total = terms[key] if total is None else total + terms[key]
    assert total is not None
    epe = float(np.mean([_final_epe(out.seq.final, scene) for out in outputs.values()]))
    breakdown = LossBreakdown(
        **{k: t.item() for k, t in terms.items()}, total=total.item(), epe=epe
    )
    return total, breakdown


def _final_epe(pred: Tensor, scene: StereoScene) -> float:
    err = np.abs(pred.data - scene.disp_left)[scene.valid_left]
    return float(err.mean()) if err.size else 0.0


def _require(image: Any) -> Any:
    if image is None:
        raise ShapeError("cena sem par com névoa renderizado")
    return image
