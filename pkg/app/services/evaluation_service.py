"""Avaliação de modelos e de mapas de disparidade já gravados."""
from __future__ import annotations

import logging
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
from numpy.typing import NDArray

from app.core.config import settings
from app.core.errors import NumericError, ShapeError
from app.networks.cfd import StudentModel, TeacherModel
from app.repositories.image_io import read_pfm
from app.schemas.metrics import DepthEval, EvalRow, StereoEval, SweepRow
from app.schemas.scene import FogParams, StereoScene
from app.services.fog_service import disparity_to_depth, render_pair
from app.services.metrics_service import (
    disparity_depth_bridge,
    mean_depth_eval,
    mean_stereo_eval,
    stereo_eval,
)
from app.tensor import no_grad

logger = logging.getLogger("cfdstereo.evaluation")

EVAL_COLUMNS = ("image", "domain", "epe", "p1", "px3", "d1")
SWEEP_COLUMNS = (
    "beta", "epe", "p1", "px3", "d1", "rmse", "mae", "srd", "ard", "silog", "delta3_pct",
    "depth_pixels",
)
AGGREGATE = "mean"


def predict_disparity(
    model: TeacherModel | StudentModel, scene: StereoScene, domain: str
) -> NDArray[np.float64]:
    """Disparidade final em resolução cheia; o professor sempre recebe os dois domínios."""
    with no_grad():
        if isinstance(model, TeacherModel):
            out = model.forward(scene.pair("clean"), scene.pair("fog"))
            return out.seq.final.data.astype(np.float64)
        return model.forward(scene.pair(domain)).seq.final.data.astype(np.float64)


def model_domains(model: TeacherModel | StudentModel) -> tuple[str, ...]:
    return ("fused",) if isinstance(model, TeacherModel) else ("clean", "fog")


def aggregate_rows(rows: Sequence[EvalRow]) -> list[EvalRow]:
    """Uma linha de média por domínio, na ordem de primeira aparição."""
    out: list[EvalRow] = []
    for domain in dict.fromkeys(r.domain for r in rows):
        evals = [
            StereoEval(epe=r.epe, p1=r.p1, px3=r.px3, d1=r.d1) for r in rows if r.domain == domain
        ]
        out.append(EvalRow.from_eval(AGGREGATE, domain, mean_stereo_eval(evals)))
    return out


class EvaluationService:
    def __init__(self, workers: int | None = None) -> None:
        self.workers = workers or settings.NUM_WORKERS

    # ----------------- MODELO -----------------
    def evaluate_model(
        self, model: TeacherModel | StudentModel, scenes: Sequence[StereoScene]
    ) -> list[EvalRow]:
        """Linhas por imagem e domínio seguidas das médias por domínio."""
        domains = model_domains(model)

        def run(scene: StereoScene) -> list[EvalRow]:
            rows = []
            for domain in domains:
                pred = predict_disparity(model, scene, domain)
                ev = stereo_eval(pred, scene.disp_left, scene.valid_left)
                rows.append(EvalRow.from_eval(scene.name, domain, ev))
            return rows

        # no_grad é estado do processo: ligado antes de abrir as threads
        with no_grad(), ThreadPoolExecutor(max_workers=self.workers) as pool:
            per_scene = list(pool.map(run, scenes))
        rows = [row for rows in per_scene for row in rows]
        summary = aggregate_rows(rows)
        for row in summary:
            logger.info("avaliação %s: epe=%.4f p1=%.4f", row.domain, row.epe, row.p1)
        return rows + summary

    # ----------------- MAPAS EM DISCO -----------------
    def evaluate_maps(
        self, pred_path: str | Path, gt_path: str | Path, mask_path: str | Path | None = None
    ) -> list[EvalRow]:
        pred, gt = read_pfm(pred_path), read_pfm(gt_path)
        if pred.shape != gt.shape:
            raise ShapeError(f"predição {pred.shape} e gt {gt.shape} com tamanhos diferentes")
        mask = np.isfinite(gt) & (gt > 0)
        if mask_path is not None:
            mask &= read_pfm(mask_path) > 0.5
        ev = stereo_eval(pred, gt, mask)
        row = EvalRow.from_eval(Path(pred_path).stem, "given", ev)
        return [row, EvalRow.from_eval(AGGREGATE, "given", ev)]

    # ----------------- VARREDURA DE NÉVOA -----------------
    def sweep_fog(
        self,
        model: StudentModel,
        scenes: Sequence[StereoScene],
        betas: Sequence[float],
        fallback_depth: float | None = None,
    ) -> list[SweepRow]:
        """Re-renderiza o conjunto com cada β (mantendo L∞ de cada cena) e avalia o aluno."""
        if not scenes:
            raise NumericError("conjunto de avaliação vazio")
        rows: list[SweepRow] = []
        with no_grad():
            for beta in betas:
                stereo: list[StereoEval] = []
                depth: list[DepthEval] = []
                pixels = 0
                for scene in scenes:
                    fog = FogParams(beta=beta, airlight=scene.fog.airlight)
                    pair = render_pair(
                        scene.clean_left, scene.clean_right, scene.disp_left,
                        scene.disp_right, scene.rig, fog, fallback_depth,
                    )
                    pred = model.forward(pair).seq.final.data.astype(np.float64)
                    stereo.append(stereo_eval(pred, scene.disp_left, scene.valid_left))
                    gt_depth = disparity_to_depth(scene.disp_left, scene.rig)
                    usable = scene.valid_left & gt_depth.valid_mask
                    usable &= disparity_to_depth(pred, scene.rig).valid_mask
                    # predição sem disparidade positiva em nenhum pixel não entra na média
                    if usable.any():
                        depth.append(disparity_depth_bridge(pred, gt_depth, scene.rig, usable))
                        pixels += int(usable.sum())
                rows.append(_sweep_row(beta, mean_stereo_eval(stereo), depth, pixels))
                logger.info("varredura β=%.3f: epe=%.4f", beta, rows[-1].epe)
        return rows


def _sweep_row(
    beta: float, stereo: StereoEval, depth: Sequence[DepthEval], pixels: int
) -> SweepRow:
    row = SweepRow(beta=beta, **stereo.model_dump(), depth_pixels=pixels)
    if not depth:
        return row
    d = mean_depth_eval(depth)
    return row.model_copy(
        update={
            "rmse": d.rmse, "mae": d.mae, "srd": d.srd, "ard": d.ard,
            "silog": d.silog, "delta3_pct": d.delta3_pct,
        }
    )
