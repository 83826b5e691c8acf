"""Dataset em disco: PPM/PFM por cena + `index.json` com os SampleRecords."""
from __future__ import annotations

import json
import logging
from collections.abc import Sequence
from pathlib import Path

import numpy as np

from app.core.errors import ConfigError, ShapeError
from app.repositories.image_io import read_pfm, read_ppm, write_pfm, write_ppm
from app.schemas.experiment import FogConfig
from app.schemas.scene import SampleRecord, StereoScene
from app.services.fog_service import render_pair

logger = logging.getLogger("cfdstereo.data")

INDEX_FILE = "index.json"


class DatasetRepository:
    """Repositório de cenas estéreo em um diretório."""

    # ----------------- SAVE -----------------
    def save(self, directory: str | Path, scenes: Sequence[StereoScene]) -> list[SampleRecord]:
        root = Path(directory)
        root.mkdir(parents=True, exist_ok=True)
        records: list[SampleRecord] = []
        for scene in scenes:
            files = {
                "clean_left": f"{scene.name}_clean_left.ppm",
                "clean_right": f"{scene.name}_clean_right.ppm",
                "disparity": f"{scene.name}_disp_left.pfm",
                "disparity_right": f"{scene.name}_disp_right.pfm",
            }
            write_ppm(root / files["clean_left"], scene.clean_left)
            write_ppm(root / files["clean_right"], scene.clean_right)
            write_pfm(root / files["disparity"], scene.disp_left)
            write_pfm(root / files["disparity_right"], scene.disp_right)
            if scene.fog_left is not None and scene.fog_right is not None:
                files["fog_left"] = f"{scene.name}_fog_left.ppm"
                files["fog_right"] = f"{scene.name}_fog_right.ppm"
                write_ppm(root / files["fog_left"], scene.fog_left)
                write_ppm(root / files["fog_right"], scene.fog_right)
            if scene.occluded_left is not None:
                files["occlusion"] = f"{scene.name}_occlusion.pfm"
                write_pfm(root / files["occlusion"], scene.occluded_left.astype(np.float32))
            records.append(SampleRecord(name=scene.name, rig=scene.rig, fog=scene.fog, **files))

        index = [r.model_dump(mode="json") for r in records]
        (root / INDEX_FILE).write_text(json.dumps(index, indent=2), encoding="utf-8")
        logger.info("dataset com %d cenas gravado em %s", len(records), root)
        return records

    # ----------------- LOAD -----------------
    def records(self, directory: str | Path) -> list[SampleRecord]:
        index = Path(directory) / INDEX_FILE
        if not index.is_file():
            raise ConfigError(f"índice do dataset não encontrado: {index}")
        return [SampleRecord.model_validate(r) for r in json.loads(index.read_text("utf-8"))]

    def files(self, directory: str | Path) -> list[Path]:
        """Todos os arquivos referenciados, na ordem do índice (para checksums)."""
        root = Path(directory)
        paths = [root / INDEX_FILE]
        for r in self.records(root):
            for key in (
                "clean_left", "clean_right", "disparity", "disparity_right",
                "fog_left", "fog_right", "occlusion",
            ):
                value = getattr(r, key)
                if value is not None:
                    paths.append(root / value)
        return paths

    def load(self, directory: str | Path, fog: FogConfig | None = None) -> list[StereoScene]:
        root = Path(directory)
        return [self._load_one(root, r, fog) for r in self.records(root)]

    def _load_one(self, root: Path, r: SampleRecord, fog: FogConfig | None) -> StereoScene:
        def path(rel: str) -> Path:
            p = root / rel
            if not p.is_file():
                raise ConfigError(f"arquivo da cena {r.name} não encontrado: {p}")
            return p

        left, right = read_ppm(path(r.clean_left)), read_ppm(path(r.clean_right))
        disp = read_pfm(path(r.disparity)).astype(np.float64)
        if left.shape != right.shape or left.shape[:2] != disp.shape:
            raise ShapeError(
                f"cena {r.name}: imagens {left.shape}/{right.shape}, disparidade {disp.shape}"
            )
        valid = np.isfinite(disp) & (disp > 0)
        disp = np.where(valid, disp, 0.0)
        disp_right = (
            read_pfm(path(r.disparity_right)).astype(np.float64) if r.disparity_right else disp
        )

        if r.fog_left and r.fog_right:
            fog_left, fog_right = read_ppm(path(r.fog_left)), read_ppm(path(r.fog_right))
        else:
            # sem par com névoa gravado: renderiza na hora com os parâmetros do índice
            fallback = fog.fallback_depth if fog is not None else None
            fog_left, fog_right = render_pair(left, right, disp, disp_right, r.rig, r.fog, fallback)

        occluded = read_pfm(path(r.occlusion)) > 0.5 if r.occlusion else None
        return StereoScene(
            name=r.name,
            clean_left=left,
            clean_right=right,
            disp_left=disp,
            disp_right=disp_right,
            valid_left=valid,
            rig=r.rig,
            fog=r.fog,
            fog_left=fog_left,
            fog_right=fog_right,
            occluded_left=occluded,
        )
