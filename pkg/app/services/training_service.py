"""Treino do professor e do aluno (passos de Adam sobre lotes de cenas)."""
from __future__ import annotations

import logging
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from app.core.errors import NumericError
from app.networks.cfd import ModelKind, StudentModel, TeacherModel, build_model
from app.repositories.artifact_repo import ArtifactRepository
from app.repositories.checkpoint_repo import CheckpointRepository
from app.schemas.experiment import ExperimentConfig
from app.schemas.scene import StereoScene
from app.services.losses import LossBreakdown, student_total_loss, teacher_loss
from app.services.optim import Adam, clip_grad_norm, step_lr
from app.tensor import Tensor, backward, tape_scope

logger = logging.getLogger("cfdstereo.training")

METRICS_COLUMNS = (
    "step", "lr", "total", "disp_clean", "disp_fog", "dist", "cont", "epe", "grad_norm",
)
DOMAINS = {"clean": ("clean",), "fog": ("fog",), "mix": ("clean", "fog")}

# streams independentes derivados da seed do experimento
_INIT_STREAM = {"teacher": 0, "student": 1}
_BATCH_STREAM = {"teacher": 2, "student": 3}

LossFn = Callable[[StereoScene], "tuple[Tensor, LossBreakdown]"]


@dataclass
class TrainResult:
    kind: ModelKind
    model: TeacherModel | StudentModel
    history: list[dict[str, float]] = field(default_factory=list)
    checkpoint: Path | None = None
    metrics_log: Path | None = None

    @property
    def final_loss(self) -> float:
        return self.history[-1]["total"] if self.history else float("nan")


def init_model(kind: ModelKind, config: ExperimentConfig) -> TeacherModel | StudentModel:
    return build_model(kind, config.model, np.random.default_rng([config.seed, _INIT_STREAM[kind]]))


def load_model(
    kind: ModelKind, config: ExperimentConfig, checkpoint: str | Path
) -> TeacherModel | StudentModel:
    model = init_model(kind, config)
    model.load_state_dict(CheckpointRepository().load(checkpoint))
    return model


class TrainingService:
    """Laço de treino compartilhado; grava log CSV e checkpoint em `output_dir`."""

    def __init__(self, config: ExperimentConfig, output_dir: str | Path | None = None) -> None:
        self.config = config
        self.output_dir = Path(output_dir) if output_dir is not None else None
        self.checkpoints = CheckpointRepository()

    # ----------------- PROFESSOR -----------------
    def train_teacher(self, scenes: Sequence[StereoScene]) -> TrainResult:
        teacher = init_model("teacher", self.config)
        assert isinstance(teacher, TeacherModel)
        weights = self.config.loss
        history = self._fit(
            "teacher",
            teacher,
            scenes,
            self.config.train.teacher_steps,
            lambda scene: teacher_loss(scene, teacher, weights),
        )
        return self._finish("teacher", teacher, history)

    # ----------------- ALUNO -----------------
    def train_student(
        self, scenes: Sequence[StereoScene], teacher: TeacherModel | None = None
    ) -> TrainResult:
        t = self.config.train
        use_dist = t.use_dist and t.train_domains == "mix"
        use_cont = t.use_cont and t.train_domains == "mix"
        if use_dist and teacher is None:
            raise NumericError("destilação habilitada sem checkpoint do professor")
        if teacher is not None:
            teacher.freeze()

        student = init_model("student", self.config)
        assert isinstance(student, StudentModel)
        weights = self.config.loss
        domains = DOMAINS[t.train_domains]
        history = self._fit(
            "student",
            student,
            scenes,
            t.student_steps,
            lambda scene: student_total_loss(
                scene,
                student,
                teacher if use_dist else None,
                weights,
                domains=domains,
                use_dist=use_dist,
                use_cont=use_cont,
            ),
        )
        return self._finish("student", student, history)

    # ----------------- LAÇO -----------------
    def _fit(
        self,
        kind: ModelKind,
        model: TeacherModel | StudentModel,
        scenes: Sequence[StereoScene],
        steps: int,
        loss_fn: LossFn,
    ) -> list[dict[str, float]]:
        if not scenes:
            raise NumericError("conjunto de treino vazio")
        cfg, opt_cfg = self.config.train, self.config.optim
        params = model.parameters()
        optimizer = Adam.from_config(params, opt_cfg)
        rng = np.random.default_rng([self.config.seed, _BATCH_STREAM[kind]])
        batch_size = min(cfg.batch_size, len(scenes))
        history: list[dict[str, float]] = []
        logger.info(
            "treinando %s: %d passos, %d cenas, %d parâmetros",
            kind, steps, len(scenes), model.num_parameters(),
        )

        for step in range(steps):
            batch = [scenes[i] for i in rng.choice(len(scenes), size=batch_size, replace=False)]
            lr = step_lr(opt_cfg.lr, step, steps, opt_cfg.lr_decay, opt_cfg.decay_stages)
            optimizer.zero_grad()
            with tape_scope():
                total: Tensor | None = None
                breakdown = LossBreakdown()
                for scene in batch:
                    loss, terms = loss_fn(scene)
                    total = loss if total is None else total + loss
                    breakdown = breakdown + terms
                assert total is not None
                total = total * (1.0 / batch_size)
                breakdown = breakdown.scaled(1.0 / batch_size)
                if not np.isfinite(total.item()):
                    self._dump_nan(kind, step + 1, batch)
                backward(total)
            grad_norm = clip_grad_norm(params, opt_cfg.clip_norm)
            optimizer.step(lr)

            row = {"step": step + 1, "lr": lr, **breakdown.as_dict(), "grad_norm": grad_norm}
            history.append(row)
            if (step + 1) % cfg.log_every == 0 or step + 1 == steps:
                logger.info(
                    "%s passo %d/%d: total=%.4f disp=%.4f/%.4f dist=%.4f cont=%.4f "
                    "epe=%.3f lr=%.2e",
                    kind, step + 1, steps, breakdown.total, breakdown.disp_clean,
                    breakdown.disp_fog, breakdown.dist, breakdown.cont, breakdown.epe, lr,
                )
        return history

    def _dump_nan(self, kind: ModelKind, step: int, batch: Sequence[StereoScene]) -> None:
        dump: Path | None = None
        if self.output_dir is not None:
            self.output_dir.mkdir(parents=True, exist_ok=True)
            dump = self.output_dir / f"{kind}_nan_step{step}.npz"
            arrays: dict[str, np.ndarray] = {}
            for scene in batch:
                arrays[f"{scene.name}_clean_left"] = scene.clean_left
                arrays[f"{scene.name}_clean_right"] = scene.clean_right
                arrays[f"{scene.name}_disp_left"] = scene.disp_left
                if scene.fog_left is not None and scene.fog_right is not None:
                    arrays[f"{scene.name}_fog_left"] = scene.fog_left
                    arrays[f"{scene.name}_fog_right"] = scene.fog_right
            np.savez(dump, **arrays)
        logger.error("perda não finita no passo %d do %s; lote salvo em %s", step, kind, dump)
        raise NumericError(f"perda não finita no passo {step}", step=step, dump=str(dump))

    def _finish(
        self, kind: ModelKind, model: TeacherModel | StudentModel, history: list[dict[str, float]]
    ) -> TrainResult:
        result = TrainResult(kind=kind, model=model, history=history)
        if self.output_dir is not None:
            artifacts = ArtifactRepository(self.output_dir)
            result.metrics_log = artifacts.write_csv(
                f"{kind}_metrics.csv", METRICS_COLUMNS, history
            )
            result.checkpoint = self.checkpoints.save(
                self.output_dir / f"{kind}.cfdw", model.state_dict()
            )
        return result


# ----------------- ATALHOS -----------------
def train_teacher(
    config: ExperimentConfig, scenes: Sequence[StereoScene], output_dir: str | Path | None = None
) -> TrainResult:
    return TrainingService(config, output_dir).train_teacher(scenes)


def train_student(
    config: ExperimentConfig,
    scenes: Sequence[StereoScene],
    teacher: TeacherModel | None,
    output_dir: str | Path | None = None,
) -> TrainResult:
    return TrainingService(config, output_dir).train_student(scenes, teacher)
