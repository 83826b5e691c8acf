"""Ablação: os sete braços (professor + seis alunos), várias seeds, uma tabela."""
from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from app.networks.cfd import StudentModel, TeacherModel
from app.repositories.artifact_repo import ArtifactRepository
from app.schemas.experiment import ARMS, ExperimentConfig
from app.schemas.metrics import AblationRow, AblationSummary, EvalRow
from app.schemas.scene import StereoScene
from app.services.dataset_service import DatasetService
from app.services.evaluation_service import AGGREGATE, EvaluationService
from app.services.training_service import TrainingService

logger = logging.getLogger("cfdstereo.ablation")

ABLATION_COLUMNS = (
    "arm", "label", "training_data", "disp_loss", "triplet_loss", "distillation_loss",
    "epe_clean", "epe_fog", "p1_clean", "p1_fog", "dual_input", "seeds",
)
STUDENT_ARMS = tuple(name for name, spec in ARMS.items() if spec.model == "student")
DOMAIN_GAP_FACTOR = 2.0


@dataclass
class _ArmScores:
    epe_clean: list[float] = field(default_factory=list)
    epe_fog: list[float] = field(default_factory=list)
    p1_clean: list[float] = field(default_factory=list)
    p1_fog: list[float] = field(default_factory=list)

    def add(self, rows: Sequence[EvalRow]) -> None:
        means = {r.domain: r for r in rows if r.image == AGGREGATE}
        if "fused" in means:
            # professor: um único número vale para as duas colunas
            means = {"clean": means["fused"], "fog": means["fused"]}
        self.epe_clean.append(means["clean"].epe)
        self.epe_fog.append(means["fog"].epe)
        self.p1_clean.append(means["clean"].p1)
        self.p1_fog.append(means["fog"].p1)


def _row(arm: str, scores: _ArmScores) -> AblationRow:
    spec = ARMS[arm]
    return AblationRow(
        arm=arm,
        label=spec.label,
        training_data=spec.training_data,
        triplet_loss=spec.use_cont,
        distillation_loss=spec.use_dist,
        epe_clean=float(np.mean(scores.epe_clean)),
        epe_fog=float(np.mean(scores.epe_fog)),
        p1_clean=float(np.mean(scores.p1_clean)),
        p1_fog=float(np.mean(scores.p1_fog)),
        dual_input=spec.model == "teacher",
        seeds=len(scores.epe_clean),
    )


def summarize(rows: Sequence[AblationRow]) -> AblationSummary:
    """Melhoria relativa do CFD sobre Student-Mix e as três checagens direcionais."""
    by_arm = {r.arm: r for r in rows}
    summary = AblationSummary(rows=list(rows))
    mix, cfd = by_arm.get("student_mix"), by_arm.get("student_cfd")
    teacher, only_clean = by_arm.get("teacher"), by_arm.get("student_c")
    if mix is not None and cfd is not None:
        if mix.epe_clean > 0:
            gain = mix.epe_clean - cfd.epe_clean
            summary.improvement_clean_pct = 100.0 * gain / mix.epe_clean
        if mix.epe_fog > 0:
            summary.improvement_fog_pct = 100.0 * (mix.epe_fog - cfd.epe_fog) / mix.epe_fog
        summary.cfd_beats_mix = cfd.epe_clean <= mix.epe_clean and cfd.epe_fog <= mix.epe_fog
    if mix is not None and teacher is not None:
        summary.teacher_beats_mix = teacher.epe_clean <= (mix.epe_clean + mix.epe_fog) / 2
    if only_clean is not None:
        summary.student_c_domain_gap = (
            only_clean.epe_fog >= DOMAIN_GAP_FACTOR * only_clean.epe_clean
        )
    return summary


def format_table(summary: AblationSummary) -> str:
    """Tabela alinhada; a linha do professor leva `*` (mesmo EPE nos dois domínios)."""
    header = ("Arm", "Training data", "Disp", "Trip", "Dist", "EPE clean", "EPE fog")
    body = []
    for r in summary.rows:
        mark = "*" if r.dual_input else ""
        body.append(
            (
                r.label + mark,
                r.training_data,
                "x" if r.disp_loss else "",
                "x" if r.triplet_loss else "",
                "x" if r.distillation_loss else "",
                f"{r.epe_clean:.3f}",
                f"{r.epe_fog:.3f}",
            )
        )
    widths = [max(len(row[i]) for row in (header, *body)) for i in range(len(header))]
    lines = [
        "  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip()
        for row in (header, *body)
    ]
    lines.insert(1, "  ".join("-" * w for w in widths))

    def pct(v: float | None) -> str:
        return "n/a" if v is None else f"{v:+.1f}%"

    lines += [
        "",
        "* professor recebe o par limpo e o par com névoa",
        f"melhoria CFD vs Student-Mix: clean {pct(summary.improvement_clean_pct)}, "
        f"fog {pct(summary.improvement_fog_pct)}",
        f"teacher <= Student-Mix: {summary.teacher_beats_mix}",
        f"CFD <= Student-Mix (ambos domínios): {summary.cfd_beats_mix}",
        f"Student-C fog/clean >= {DOMAIN_GAP_FACTOR:g}: {summary.student_c_domain_gap}",
    ]
    return "\n".join(lines) + "\n"


class AblationService:
    """Treina e avalia os sete braços; dados fixos, só os modelos variam com a seed."""

    def __init__(self, config: ExperimentConfig, output_dir: str | Path | None = None) -> None:
        self.config = config
        self.output_dir = Path(output_dir) if output_dir is not None else None
        self.evaluator = EvaluationService()

    def run(self, scenes: Sequence[StereoScene] | None = None) -> AblationSummary:
        if scenes is None:
            scenes = DatasetService().load(self.config)
        train, evals = DatasetService.split(scenes, self.config.data.eval_fraction)
        scores = {arm: _ArmScores() for arm in ARMS}

        for offset in range(self.config.ablation.seeds):
            seed = self.config.seed + offset
            logger.info("ablação: seed %d (%d/%d)", seed, offset + 1, self.config.ablation.seeds)
            teacher = self._train("teacher", seed, train, None)
            assert isinstance(teacher, TeacherModel)
            scores["teacher"].add(self.evaluator.evaluate_model(teacher, evals))
            for arm in STUDENT_ARMS:
                student = self._train(arm, seed, train, teacher if ARMS[arm].use_dist else None)
                scores[arm].add(self.evaluator.evaluate_model(student, evals))

        summary = summarize([_row(arm, scores[arm]) for arm in ARMS])
        if self.output_dir is not None:
            artifacts = ArtifactRepository(self.output_dir)
            artifacts.write_csv(
                "ablation.csv", ABLATION_COLUMNS, [r.model_dump() for r in summary.rows]
            )
            artifacts.write_text("ablation.txt", format_table(summary))
        logger.info(
            "ablação concluída: CFD <= Mix=%s, teacher <= Mix=%s",
            summary.cfd_beats_mix, summary.teacher_beats_mix,
        )
        return summary

    def _train(
        self,
        arm: str,
        seed: int,
        scenes: Sequence[StereoScene],
        teacher: TeacherModel | None,
    ) -> TeacherModel | StudentModel:
        config = self.config.arm_config(arm, seed=seed)
        trainer = TrainingService(config)
        if ARMS[arm].model == "teacher":
            return trainer.train_teacher(scenes).model
        return trainer.train_student(scenes, teacher).model
