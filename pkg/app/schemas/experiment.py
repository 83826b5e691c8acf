"""Configuração declarativa de um experimento (formato `chave=valor` por linha)."""
from __future__ import annotations

import hashlib
from collections.abc import Iterable
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Literal, Optional

from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    ValidationError,
    field_validator,
    model_validator,
)

from app.core.errors import ConfigError
from app.schemas.scene import CameraRig


# ----------------- BRAÇOS DA ABLAÇÃO -----------------
@dataclass(frozen=True)
class ArmSpec:
    label: str
    model: Literal["teacher", "student"]
    train_domains: Literal["clean", "fog", "mix"]
    use_dist: bool
    use_cont: bool

    @property
    def training_data(self) -> str:
        return {"clean": "Clean", "fog": "Foggy", "mix": "Clean + Foggy"}[self.train_domains]

    def switches(self) -> dict[str, Any]:
        return {
            "train_domains": self.train_domains,
            "use_dist": self.use_dist,
            "use_cont": self.use_cont,
        }


ARMS: dict[str, ArmSpec] = {
    "student_c": ArmSpec("Student-C", "student", "clean", False, False),
    "student_f": ArmSpec("Student-F", "student", "fog", False, False),
    "student_mix": ArmSpec("Student-Mix", "student", "mix", False, False),
    "teacher": ArmSpec("Teacher", "teacher", "mix", False, False),
    "student_dist": ArmSpec("Student + Dist", "student", "mix", True, False),
    "student_cont": ArmSpec("Student + Cont", "student", "mix", False, True),
    "student_cfd": ArmSpec("Student + Dist + Cont", "student", "mix", True, True),
}


# ----------------- GRUPOS -----------------
class _Group(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_assignment=True)


class DataConfig(_Group):
    source: Literal["synthetic", "directory"] = "synthetic"
    directory: Optional[str] = None
    n_scenes: int = Field(32, ge=1)
    height: int = Field(32, ge=4)
    width: int = Field(64, ge=4)
    disp_range: tuple[int, int] = (2, 12)
    layers: tuple[int, int] = (2, 4)
    eval_fraction: float = Field(0.25, gt=0, lt=1)
    focal_px: float = Field(200.0, gt=0)
    baseline_m: float = Field(0.3, gt=0)

    @property
    def rig(self) -> CameraRig:
        return CameraRig(focal_px=self.focal_px, baseline_m=self.baseline_m)


class FogConfig(_Group):
    beta_range: tuple[float, float] = (0.03, 0.3)
    airlight_range: tuple[float, float] = (0.7, 1.0)
    fallback_depth: Optional[float] = None  # None: maior profundidade válida do quadro


class ModelConfig(_Group):
    channels: int = Field(32, ge=1)
    downsample: int = 4
    iters: int = Field(6, ge=1)
    max_disp: int = Field(8, ge=1)  # na escala das features
    radius: int = Field(3, ge=0)
    attention_input: Literal["branch", "input"] = "branch"

    @field_validator("downsample")
    @classmethod
    def _power_of_two(cls, v: int) -> int:
        if v not in (1, 2, 4, 8):
            raise ValueError(f"downsample deve ser 1, 2, 4 ou 8, recebeu {v}")
        return v


class LossConfig(_Group):
    lambda1: float = Field(0.1, ge=0)
    lambda2: float = Field(0.1, ge=0)
    gamma: float = Field(0.95, gt=0, le=1)
    margin: float = Field(1.0, gt=0)


class OptimConfig(_Group):
    lr: float = Field(4e-4, gt=0)
    beta1: float = Field(0.9, ge=0, lt=1)
    beta2: float = Field(0.999, ge=0, lt=1)
    eps: float = Field(1e-8, gt=0)
    clip_norm: float = Field(1.0, ge=0)
    lr_decay: float = Field(0.5, gt=0, le=1)
    decay_stages: int = Field(3, ge=1)


class TrainConfig(_Group):
    teacher_steps: int = Field(3000, ge=0)
    student_steps: int = Field(3000, ge=0)
    batch_size: int = Field(4, ge=1)
    log_every: int = Field(50, ge=1)
    train_domains: Literal["clean", "fog", "mix"] = "mix"
    use_dist: bool = True
    use_cont: bool = True
    teacher_checkpoint: Optional[str] = None


class AblationConfig(_Group):
    seeds: int = Field(3, ge=1)


class SweepConfig(_Group):
    betas: tuple[float, ...] = (0.0, 0.03, 0.06, 0.1, 0.15, 0.2, 0.25, 0.3)


# ----------------- CONFIG RAIZ -----------------
class ExperimentConfig(BaseModel):
    """Descrição completa de uma execução (uma linha da Tabela de ablação)."""

    seed: int = 0
    preset: Optional[str] = None
    output_dir: Optional[str] = None  # None: OUTPUT_ROOT/<comando>
    data: DataConfig = Field(default_factory=DataConfig)
    fog: FogConfig = Field(default_factory=FogConfig)
    model: ModelConfig = Field(default_factory=ModelConfig)
    loss: LossConfig = Field(default_factory=LossConfig)
    optim: OptimConfig = Field(default_factory=OptimConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    ablation: AblationConfig = Field(default_factory=AblationConfig)
    sweep: SweepConfig = Field(default_factory=SweepConfig)

    model_config = ConfigDict(extra="forbid")

    @model_validator(mode="before")
    @classmethod
    def _preset_defaults(cls, data: Any) -> Any:
        # chaves train.* explícitas prevalecem sobre o preset
        if not isinstance(data, dict) or data.get("preset") not in ARMS:
            return data
        train = data.get("train")
        if train is None or isinstance(train, dict):
            data = {**data, "train": {**ARMS[data["preset"]].switches(), **(train or {})}}
        return data

    @model_validator(mode="after")
    def _check(self) -> "ExperimentConfig":
        d, m = self.data, self.model
        if d.height % m.downsample or d.width % m.downsample:
            raise ValueError(
                f"dimensões {d.height}×{d.width} devem ser divisíveis "
                f"por downsample={m.downsample}"
            )
        if d.disp_range[0] < 0 or d.disp_range[0] > d.disp_range[1]:
            raise ValueError(f"disp_range inválido: {d.disp_range}")
        if d.disp_range[1] * 4 >= d.width:
            raise ValueError(
                f"disparidade máxima {d.disp_range[1]} deve ser < W/4 = {d.width / 4}"
            )
        if m.max_disp >= d.width // m.downsample:
            raise ValueError(
                f"model.max_disp {m.max_disp} deve ser < W/s = {d.width // m.downsample}"
            )
        if d.source == "directory" and (d.directory is None or not Path(d.directory).is_dir()):
            raise ValueError(f"diretório de dataset inexistente: {d.directory}")
        if self.preset is not None:
            if self.preset not in ARMS:
                raise ValueError(
                    f"preset desconhecido: {self.preset} (opções: {', '.join(ARMS)})"
                )
        return self

    # ----------------- ARM -----------------
    @property
    def arm(self) -> ArmSpec:
        """Braço do preset; vira `Custom` se alguma chave train.* o contradiz."""
        t = self.train
        preset = ARMS.get(self.preset) if self.preset is not None else None
        custom = ArmSpec(
            "Custom",
            preset.model if preset is not None else "student",
            t.train_domains,
            t.use_dist,
            t.use_cont,
        )
        if preset is not None and preset.switches() == custom.switches():
            return preset
        return custom

    def arm_config(self, arm: str, *, seed: int | None = None) -> "ExperimentConfig":
        extra = [f"preset={arm}"] + ([f"seed={seed}"] if seed is not None else [])
        return self.with_overrides(extra)

    # ----------------- TEXTO -----------------
    @classmethod
    def from_text(cls, text: str) -> "ExperimentConfig":
        return cls.from_lines(text.splitlines())

    @classmethod
    def from_lines(cls, lines: Iterable[str]) -> "ExperimentConfig":
        raw: dict[str, Any] = {}
        for lineno, line in enumerate(lines, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"linha {lineno}: esperado 'chave=valor', recebeu {line!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            parts = key.split(".")
            if len(parts) > 2 or not all(parts):
                raise ConfigError(f"linha {lineno}: chave inválida {key!r}")
            if key == "preset" and value in ARMS:
                # o preset fixa as chaves de treino; linhas train.* seguintes prevalecem
                train = raw.setdefault("train", {})
                if isinstance(train, dict):
                    train.update(ARMS[value].switches())
            if len(parts) == 1:
                raw[key] = _coerce(value)
            else:
                group = raw.setdefault(parts[0], {})
                if not isinstance(group, dict):
                    raise ConfigError(f"linha {lineno}: {parts[0]!r} não é um grupo")
                group[parts[1]] = _coerce(value)
        try:
            return cls.model_validate(raw)
        except ValidationError as e:
            problems = "; ".join(
                f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in e.errors()
            )
            raise ConfigError(f"configuração inválida: {problems}") from e

    @classmethod
    def from_file(cls, path: str | Path) -> "ExperimentConfig":
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"arquivo de configuração não encontrado: {p}")
        return cls.from_text(p.read_text(encoding="utf-8"))

    def to_text(self) -> str:
        lines: list[str] = []
        for name, value in self.model_dump(mode="python").items():
            if isinstance(value, dict):
                lines.extend(f"{name}.{sub}={_fmt(v)}" for sub, v in value.items())
            else:
                lines.append(f"{name}={_fmt(value)}")
        return "\n".join(lines) + "\n"

    def with_overrides(self, overrides: Iterable[str]) -> "ExperimentConfig":
        """Aplica `--set chave=valor`; a última ocorrência de uma chave vence."""
        return self.from_lines([*self.to_text().splitlines(), *overrides])

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(self.to_text().encode("utf-8")).hexdigest()


def _coerce(value: str) -> Any:
    if value == "":
        return None
    if "," in value:
        return [item.strip() for item in value.split(",") if item.strip()]
    return value


def _fmt(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        text = ",".join(_fmt(v) for v in value)
        return text + "," if len(value) == 1 else text
    return str(value)
