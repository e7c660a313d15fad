"""HTTP service wrapping the core pipeline.

Endpoints mirror the CLI subcommands one to one; every handler is a pure
function of its request body, so the service can run any number of
workers. Semantic errors surface as 400s with a message, schema errors as
FastAPI's standard 422.
"""

from __future__ import annotations

from fastapi import FastAPI, HTTPException
from fastapi.responses import JSONResponse

from .. import __version__
from ..augment import build_database, paste
from ..boxes import DetectionSet, nms
from ..config import PipelineConfig
from ..documents import (
    ConfigDocument,
    config_to_doc,
    database_to_doc,
    detections_to_doc,
    doc_to_config,
    doc_to_database,
    doc_to_detections,
    doc_to_scene,
    eval_result_to_doc,
    grid_to_doc,
    scene_to_doc,
)
from ..ensemble import WbfConfig, tta_collapse, tta_expand, wbf
from ..metrics import evaluate, format_report
from ..pipeline import PipelineStageError, run_pipeline
from ..scene import Scene
from ..selftest import run_selftest
from ..synth import synth_scene
from . import schemas


def _config(doc: ConfigDocument | None) -> PipelineConfig:
    try:
        return doc_to_config(doc) if doc is not None else PipelineConfig()
    except ValueError as e:
        raise HTTPException(status_code=400, detail=f"invalid config: {e}") from e


def create_app() -> FastAPI:
    app = FastAPI(
        title="bevkit",
        version=__version__,
        description="Deterministic LiDAR-camera BEV fusion pipeline as a service.",
    )

    @app.exception_handler(ValueError)
    async def _value_error(request, exc: ValueError):
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.get("/health", response_model=schemas.HealthResponse)
    def health() -> schemas.HealthResponse:
        return schemas.HealthResponse(status="ok", service="bevkit", version=__version__)

    @app.get("/config/default", response_model=ConfigDocument)
    def default_config() -> ConfigDocument:
        return config_to_doc(PipelineConfig())

    @app.post("/synth", response_model=schemas.SceneDocument)
    def synth(req: schemas.SynthRequest):
        cfg = _config(req.config)
        scene = synth_scene(
            req.seed,
            req.n_objects,
            req.n_points,
            cfg,
            sample_id=req.sample_id,
            n_cameras=req.n_cameras,
        )
        return scene_to_doc(scene)

    @app.post("/pipeline", response_model=schemas.PipelineResponse)
    def pipeline(req: schemas.PipelineRequest) -> schemas.PipelineResponse:
        cfg = _config(req.config)
        scene = doc_to_scene(req.scene)
        try:
            result = run_pipeline(scene, cfg)
        except PipelineStageError as e:
            raise HTTPException(status_code=400, detail=str(e)) from e
        return schemas.PipelineResponse(
            fused=grid_to_doc(result.fused, name="fused_bev"),
            camera=grid_to_doc(result.camera, name="camera_bev")
            if req.include_branch_grids
            else None,
            lidar=grid_to_doc(result.lidar, name="lidar_bev")
            if req.include_branch_grids
            else None,
            diagnostics=schemas.DiagnosticsDocument(**result.diagnostics),
        )

    @app.post("/nms", response_model=schemas.DetectionsDocument)
    def run_nms(req: schemas.NmsRequest):
        cfg = _config(req.config)
        iou_th = req.iou_threshold if req.iou_threshold is not None else cfg.nms_iou_threshold
        score_th = (
            req.score_threshold if req.score_threshold is not None else cfg.nms_score_threshold
        )
        out = [
            nms(ds, iou_th, per_class=req.per_class, score_threshold=score_th)
            for ds in doc_to_detections(req.detections)
        ]
        return detections_to_doc(out)

    @app.post("/tta", response_model=schemas.TtaResponse)
    def run_tta(req: schemas.TtaRequest) -> schemas.TtaResponse:
        cfg = _config(req.config)
        scene = doc_to_scene(req.scene)
        variants = tta_expand(scene, cfg.tta)
        # Stand-in detector: each variant reports its own (transformed)
        # ground truth, which collapse maps back through the inverses.
        det_sets = [DetectionSet(v.sample_id, v.boxes) for v, _ in variants]
        collapsed = tta_collapse(det_sets, [rec for _, rec in variants])
        return schemas.TtaResponse(
            detections=detections_to_doc([collapsed]), n_variants=len(variants)
        )

    @app.post("/wbf", response_model=schemas.DetectionsDocument)
    def run_wbf(req: schemas.WbfRequest):
        cfg = _config(req.config)
        wbf_cfg = cfg.wbf
        if req.weights is not None:
            wbf_cfg = WbfConfig(
                cluster_iou=wbf_cfg.cluster_iou,
                model_weights=tuple(req.weights),
                score_mode=wbf_cfg.score_mode,
                min_cluster_confidence=wbf_cfg.min_cluster_confidence,
            )
        if not req.detection_sets:
            raise HTTPException(status_code=400, detail="no detection sets given")
        per_model = [doc_to_detections(d) for d in req.detection_sets]
        id_lists = [[s.sample_id for s in sets] for sets in per_model]
        if any(ids != id_lists[0] for ids in id_lists):
            raise HTTPException(
                status_code=400, detail="detection sets do not cover the same samples"
            )
        fused = [
            wbf([sets[i] for sets in per_model], wbf_cfg) for i in range(len(id_lists[0]))
        ]
        return detections_to_doc(fused)

    @app.post("/eval", response_model=schemas.EvalResponse)
    def run_eval(req: schemas.EvalRequest) -> schemas.EvalResponse:
        cfg = _config(req.config)
        gts = doc_to_detections(req.ground_truth)
        preds = doc_to_detections(req.predictions)
        by_id = {p.sample_id: p for p in preds}
        unknown = sorted(set(by_id) - {g.sample_id for g in gts})
        if unknown:
            raise HTTPException(
                status_code=400, detail=f"predictions for unknown samples: {unknown}"
            )
        aligned = [by_id.get(g.sample_id, DetectionSet(g.sample_id, [])) for g in gts]
        result = evaluate(aligned, gts, cfg.eval)
        return schemas.EvalResponse(
            report=format_report(result, cfg.eval), result=eval_result_to_doc(result)
        )

    @app.post("/paste", response_model=schemas.PasteResponse)
    def run_paste(req: schemas.PasteRequest) -> schemas.PasteResponse:
        cfg = _config(req.config)
        scene = doc_to_scene(req.scene)
        if req.database is not None:
            db = doc_to_database(req.database)
        elif req.sources:
            donors = [doc_to_scene(s) for s in req.sources]
            db = build_database([(s.cloud, s.boxes) for s in donors])
        else:
            raise HTTPException(
                status_code=400, detail="paste needs either sources or a database"
            )
        quota = req.quota if req.quota is not None else cfg.paste_quota
        seed = req.seed if req.seed is not None else cfg.seed
        result = paste(scene.cloud, scene.boxes, db, quota, seed)
        # Feature maps describe the pre-paste cloud; drop them so callers
        # regenerate from the augmented points.
        pasted_scene = Scene(
            sample_id=scene.sample_id,
            cloud=result.cloud,
            cameras=scene.cameras,
            boxes=result.boxes,
            features=None,
        )
        return schemas.PasteResponse(
            scene=scene_to_doc(pasted_scene),
            requested=result.requested,
            accepted=result.accepted,
            database=database_to_doc(db) if req.include_database else None,
        )

    @app.post("/selftest", response_model=schemas.SelftestResponse)
    def selftest() -> schemas.SelftestResponse:
        checks = [
            schemas.SelftestCheckDoc(name=c.name, passed=bool(c.passed), detail=c.detail)
            for c in run_selftest()
        ]
        return schemas.SelftestResponse(passed=all(c.passed for c in checks), checks=checks)

    return app
