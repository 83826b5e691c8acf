"""Linha de comando: `cfdstereo <subcomando> [--config arquivo] [--set chave=valor ...]`.

Toda execução grava `manifest.json` no diretório de saída (config, seed,
checksums de entradas e saídas) e é registrada no banco de execuções.
"""
from __future__ import annotations

import argparse
import logging
import sys
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, TypeVar

from pydantic import ValidationError
from sqlalchemy.exc import SQLAlchemyError

from app.core.config import settings
from app.core.errors import EXIT_OK, EXIT_USAGE, CFDError, ConfigError, NumericError
from app.core.logging import setup_logging
from app.db.session import SessionLocal, init_db
from app.networks.cfd import StudentModel
from app.repositories.artifact_repo import ArtifactRepository, sha256_file
from app.repositories.image_io import read_pfm, read_ppm, write_pfm, write_ppm
from app.schemas.experiment import ExperimentConfig
from app.schemas.scene import FogParams, StereoScene
from app.services.ablation_service import AblationService, format_table
from app.services.dataset_service import DatasetService
from app.services.evaluation_service import (
    AGGREGATE,
    EVAL_COLUMNS,
    SWEEP_COLUMNS,
    EvaluationService,
)
from app.services.fog_service import disparity_to_depth, render_fog, transmission
from app.services.gradcheck_service import DEFAULT_INSTANCES, case_names, run_gradcheck
from app.services.run_service import RunService
from app.services.training_service import TrainingService, load_model
from app.tensor import numeric_mode

logger = logging.getLogger("cfdstereo.cli")

T = TypeVar("T")

GRADCHECK_COLUMNS = ("case", "tensor", "rel_error", "passed")


@dataclass
class CommandResult:
    outputs: list[Path] = field(default_factory=list)
    inputs: list[Path] = field(default_factory=list)
    metrics: dict[str, Any] = field(default_factory=dict)
    exit_code: int = EXIT_OK


Handler = Callable[[argparse.Namespace, ExperimentConfig, ArtifactRepository], CommandResult]


# ----------------- DADOS -----------------
def _scenes(config: ExperimentConfig) -> tuple[list[StereoScene], list[Path]]:
    service = DatasetService()
    scenes = service.load(config)
    inputs: list[Path] = []
    if config.data.source == "directory":
        assert config.data.directory is not None
        inputs = service.repo.files(config.data.directory)
    return scenes, inputs


def _split(config: ExperimentConfig) -> tuple[list[StereoScene], list[StereoScene], list[Path]]:
    scenes, inputs = _scenes(config)
    train, evals = DatasetService.split(scenes, config.data.eval_fraction)
    return train, evals, inputs


def _cmd_synth_data(
    args: argparse.Namespace, config: ExperimentConfig, artifacts: ArtifactRepository
) -> CommandResult:
    service = DatasetService()
    scenes = service.synthesize(config)
    service.write(scenes, artifacts.output_dir)
    return CommandResult(
        outputs=service.repo.files(artifacts.output_dir), metrics={"scenes": len(scenes)}
    )


def _cmd_render_fog(
    args: argparse.Namespace, config: ExperimentConfig, artifacts: ArtifactRepository
) -> CommandResult:
    try:
        fog = FogParams(beta=args.beta, airlight=args.airlight)
    except ValidationError as e:
        raise ConfigError(f"parâmetros de névoa inválidos: {e.errors()[0]['msg']}") from e
    image = read_ppm(args.image)
    depth = disparity_to_depth(read_pfm(args.disparity), config.data.rig)
    foggy = render_fog(image, depth, fog, config.fog.fallback_depth)
    t = transmission(depth, fog.beta, config.fog.fallback_depth)
    write_ppm(artifacts.path("foggy.ppm"), foggy)
    write_pfm(artifacts.path("transmission.pfm"), t)
    return CommandResult(
        outputs=[artifacts.path("foggy.ppm"), artifacts.path("transmission.pfm")],
        inputs=[Path(args.image), Path(args.disparity)],
        metrics={"mean_transmission": float(t.mean())},
    )


# ----------------- TREINO -----------------
def _cmd_train_teacher(
    args: argparse.Namespace, config: ExperimentConfig, artifacts: ArtifactRepository
) -> CommandResult:
    train, _, inputs = _split(config)
    result = TrainingService(config, artifacts.output_dir).train_teacher(train)
    assert result.checkpoint is not None and result.metrics_log is not None
    return CommandResult(
        outputs=[result.metrics_log, result.checkpoint],
        inputs=inputs,
        metrics={"final_loss": result.final_loss},
    )


def _cmd_train_student(
    args: argparse.Namespace, config: ExperimentConfig, artifacts: ArtifactRepository
) -> CommandResult:
    t = config.train
    teacher_path = args.teacher or t.teacher_checkpoint
    needs_teacher = t.use_dist and t.train_domains == "mix"
    if needs_teacher and not teacher_path:
        raise ConfigError("destilação habilitada: informe --teacher ou train.teacher_checkpoint")
    train, _, inputs = _split(config)
    teacher = None
    if needs_teacher:
        teacher = load_model("teacher", config, teacher_path)
        inputs.append(Path(teacher_path))
    result = TrainingService(config, artifacts.output_dir).train_student(train, teacher)
    assert result.checkpoint is not None and result.metrics_log is not None
    return CommandResult(
        outputs=[result.metrics_log, result.checkpoint],
        inputs=inputs,
        metrics={"final_loss": result.final_loss},
    )


# ----------------- AVALIAÇÃO -----------------
def _cmd_evaluate(
    args: argparse.Namespace, config: ExperimentConfig, artifacts: ArtifactRepository
) -> CommandResult:
    evaluator = EvaluationService()
    if args.pred or args.gt:
        if not (args.pred and args.gt):
            raise ConfigError("--pred e --gt devem ser usados juntos")
        rows = evaluator.evaluate_maps(args.pred, args.gt, args.mask)
        inputs = [Path(p) for p in (args.pred, args.gt, args.mask) if p]
    elif args.checkpoint:
        kind = args.model or config.arm.model
        model = load_model(kind, config, args.checkpoint)
        _, evals, inputs = _split(config)
        rows = evaluator.evaluate_model(model, evals)
        inputs.append(Path(args.checkpoint))
    else:
        raise ConfigError("evaluate exige --pred/--gt ou --checkpoint")

    path = artifacts.write_csv("eval.csv", EVAL_COLUMNS, [r.model_dump() for r in rows])
    sys.stdout.write(path.read_text(encoding="utf-8"))
    metrics = {f"{r.domain}_epe": r.epe for r in rows if r.image == AGGREGATE}
    return CommandResult(outputs=[path], inputs=inputs, metrics=metrics)


def _cmd_sweep_fog(
    args: argparse.Namespace, config: ExperimentConfig, artifacts: ArtifactRepository
) -> CommandResult:
    model = load_model("student", config, args.checkpoint)
    assert isinstance(model, StudentModel)
    _, evals, inputs = _split(config)
    rows = EvaluationService().sweep_fog(
        model, evals, config.sweep.betas, config.fog.fallback_depth
    )
    path = artifacts.write_csv("sweep.csv", SWEEP_COLUMNS, [r.model_dump() for r in rows])
    return CommandResult(
        outputs=[path],
        inputs=[*inputs, Path(args.checkpoint)],
        metrics={f"epe@{r.beta:g}": r.epe for r in rows},
    )


def _cmd_gradcheck(
    args: argparse.Namespace, config: ExperimentConfig, artifacts: ArtifactRepository
) -> CommandResult:
    results = run_gradcheck(
        config.seed,
        tolerance=args.tolerance,
        instances=args.instances,
        only=args.case or None,
    )
    rows = [
        (r.name, tensor, err, err < r.tolerance)
        for r in results
        for tensor, err in r.errors.items()
    ]
    path = artifacts.write_csv("gradcheck.csv", GRADCHECK_COLUMNS, rows)
    failed = [r.name for r in results if not r.passed]
    for r in results:
        print(f"{'ok  ' if r.passed else 'FAIL'} {r.name:<24} {r.max_error:.3e}")
    if failed:
        logger.error("gradcheck reprovado em %d casos: %s", len(failed), ", ".join(failed))
    return CommandResult(
        outputs=[path],
        metrics={"cases": len(results), "failed": failed},
        exit_code=NumericError.exit_code if failed else EXIT_OK,
    )


def _cmd_ablate(
    args: argparse.Namespace, config: ExperimentConfig, artifacts: ArtifactRepository
) -> CommandResult:
    scenes, inputs = _scenes(config)
    summary = AblationService(config, artifacts.output_dir).run(scenes)
    sys.stdout.write(format_table(summary))
    return CommandResult(
        outputs=[artifacts.path("ablation.csv"), artifacts.path("ablation.txt")],
        inputs=inputs,
        metrics=summary.model_dump(exclude={"rows"}),
    )


HANDLERS: dict[str, Handler] = {
    "synth-data": _cmd_synth_data,
    "render-fog": _cmd_render_fog,
    "train-teacher": _cmd_train_teacher,
    "train-student": _cmd_train_student,
    "evaluate": _cmd_evaluate,
    "gradcheck": _cmd_gradcheck,
    "ablate": _cmd_ablate,
    "sweep-fog": _cmd_sweep_fog,
}


# ----------------- REGISTRO DE EXECUÇÕES -----------------
def _registry(action: Callable[[RunService], T]) -> T | None:
    """Falhas do banco nunca mudam o código de saída do comando."""
    try:
        with SessionLocal() as db:
            return action(RunService(db))
    except (SQLAlchemyError, CFDError) as e:
        logger.warning("registro de execuções indisponível: %s", e)
        return None


# ----------------- EXECUÇÃO -----------------
def _output_dir(args: argparse.Namespace, config: ExperimentConfig) -> Path:
    if args.output:
        return Path(args.output)
    if config.output_dir:
        return Path(config.output_dir)
    return Path(settings.OUTPUT_ROOT) / args.command


def _execute(args: argparse.Namespace, config: ExperimentConfig) -> int:
    out = _output_dir(args, config)
    artifacts = ArtifactRepository(out)
    run = _registry(lambda svc: svc.start_run(args.command, config, str(out)))
    try:
        with numeric_mode(args.numeric_mode):
            result = HANDLERS[args.command](args, config, artifacts)
    except CFDError as e:
        if run is not None:
            _registry(lambda svc: svc.fail_run(run.id, e.exit_code, e.detail))
        raise

    recorded = {k: v for k, v in vars(args).items() if k != "output"}
    artifacts.write_manifest(
        command=args.command,
        config_text=config.to_text(),
        config_hash=config.config_hash,
        seed=config.seed,
        args=recorded,
        inputs=result.inputs,
        outputs=result.outputs,
    )
    if run is not None:
        if result.exit_code == EXIT_OK:
            _registry(lambda svc: svc.finish_run(run.id, result.metrics))
        else:
            _registry(lambda svc: svc.fail_run(run.id, result.exit_code, str(result.metrics)))
    logger.info("%s concluído em %s", args.command, out)
    return result.exit_code


def _load_config(args: argparse.Namespace) -> ExperimentConfig:
    config = ExperimentConfig.from_file(args.config) if args.config else ExperimentConfig()
    return config.with_overrides(args.set or [])


def _replay(args: argparse.Namespace) -> int:
    """Re-executa o comando do manifest e exige CSVs idênticos byte a byte."""
    manifest = ArtifactRepository.read_manifest(args.manifest)
    for name, digest in manifest.inputs.items():
        if not Path(name).is_file():
            raise ConfigError(f"entrada registrada não encontrada: {name}")
        if sha256_file(name) != digest:
            raise ConfigError(f"checksum da entrada mudou desde a execução original: {name}")

    source = Path(args.manifest)
    original_dir = source if source.is_dir() else source.parent
    recorded = argparse.Namespace(**manifest.args)
    recorded.output = args.output or str(original_dir / "replay")
    config = ExperimentConfig.from_text(manifest.config)
    code = _execute(recorded, config)

    replayed = ArtifactRepository.read_manifest(recorded.output)
    diverged = [
        name
        for name, digest in manifest.outputs.items()
        if name.endswith(".csv") and replayed.outputs.get(name) != digest
    ]
    if diverged:
        raise NumericError(f"replay divergiu em: {', '.join(sorted(diverged))}", files=diverged)
    print(f"replay idêntico: {len(manifest.outputs)} saídas conferidas em {recorded.output}")
    return code


# ----------------- PARSER -----------------
def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="arquivo chave=valor com a configuração do experimento")
    common.add_argument(
        "--set", action="append", metavar="CHAVE=VALOR", help="sobrescreve uma chave (repetível)"
    )
    common.add_argument("--output", help="diretório de saída (padrão: output_dir da config)")
    common.add_argument("--log-level", dest="log_level", default=None)
    common.add_argument(
        "--numeric-mode",
        dest="numeric_mode",
        choices=("training", "oracle"),
        help="f32 com clamp (training) ou f64 estrito (oracle); padrão: CFD_NUMERIC_MODE",
    )

    parser = argparse.ArgumentParser(prog="cfdstereo", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("synth-data", parents=[common], help="gera o dataset sintético")

    p = sub.add_parser("render-fog", parents=[common], help="aplica névoa a uma imagem PPM")
    p.add_argument("--image", required=True)
    p.add_argument("--disparity", required=True)
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--airlight", type=float, default=0.85)

    sub.add_parser("train-teacher", parents=[common], help="treina o professor")
    p = sub.add_parser("train-student", parents=[common], help="treina o aluno")
    p.add_argument("--teacher", help="checkpoint do professor (exigido com destilação)")

    p = sub.add_parser("evaluate", parents=[common], help="avalia mapas PFM ou um checkpoint")
    p.add_argument("--pred")
    p.add_argument("--gt")
    p.add_argument("--mask")
    p.add_argument("--checkpoint")
    p.add_argument("--model", choices=("teacher", "student"))

    p = sub.add_parser("gradcheck", parents=[common], help="diferenças finitas vs backward")
    p.add_argument(
        "--tolerance", type=float, help="substitui a tolerância de todos os casos"
    )
    p.add_argument("--instances", type=int, default=DEFAULT_INSTANCES)
    p.add_argument("--case", action="append", choices=case_names())

    sub.add_parser("ablate", parents=[common], help="roda os sete braços da ablação")
    p = sub.add_parser("sweep-fog", parents=[common], help="aluno em densidades de névoa")
    p.add_argument("--checkpoint", required=True)

    p = sub.add_parser("replay", help="repete uma execução a partir do manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--output")
    p.add_argument("--log-level", dest="log_level", default=None)
    return parser


def cli(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse sai com 2 em erro de uso; aqui uso é sempre 1
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE

    setup_logging(args.log_level or settings.LOG_LEVEL)
    args.numeric_mode = getattr(args, "numeric_mode", None) or settings.NUMERIC_MODE
    try:
        init_db()
    except SQLAlchemyError as e:
        logger.warning("registro de execuções indisponível: %s", e)

    try:
        if args.command == "replay":
            return _replay(args)
        return _execute(args, _load_config(args))
    except CFDError as e:
        logger.error("%s: %s", type(e).__name__, e.detail)
        print(f"erro: {e.detail}", file=sys.stderr)
        return e.exit_code
    except FileNotFoundError as e:
        logger.error("arquivo não encontrado: %s", e.filename)
        print(f"erro: arquivo não encontrado: {e.filename}", file=sys.stderr)
        return EXIT_USAGE


def main() -> None:
    sys.exit(cli())


if __name__ == "__main__":
    main()
