"""Pydantic request/response envelopes for the HTTP API.

Payload documents (scenes, detections, grids, configs) reuse the shared
document models, so the wire format and the file format are identical.
"""

from __future__ import annotations

from typing import Optional

from pydantic import BaseModel, Field

from ..documents import (
    ConfigDocument,
    DetectionsDocument,
    DiagnosticsDocument,
    EvalResultDocument,
    GridDocument,
    GtDatabaseDocument,
    SceneDocument,
)


class HealthResponse(BaseModel):
    status: str
    service: str
    version: str


class SynthRequest(BaseModel):
    seed: int = 0
    n_objects: int = 6
    n_points: int = 20000
    n_cameras: int = 6
    sample_id: Optional[str] = None
    config: Optional[ConfigDocument] = None


class PipelineRequest(BaseModel):
    scene: SceneDocument
    config: Optional[ConfigDocument] = None
    include_branch_grids: bool = True


class PipelineResponse(BaseModel):
    fused: GridDocument
    camera: Optional[GridDocument] = None
    lidar: Optional[GridDocument] = None
    diagnostics: DiagnosticsDocument


class NmsRequest(BaseModel):
    detections: DetectionsDocument
    iou_threshold: Optional[float] = None
    per_class: bool = True
    score_threshold: Optional[float] = None
    config: Optional[ConfigDocument] = None


class TtaRequest(BaseModel):
    scene: SceneDocument
    config: Optional[ConfigDocument] = None


class TtaResponse(BaseModel):
    detections: DetectionsDocument
    n_variants: int


class WbfRequest(BaseModel):
    detection_sets: list[DetectionsDocument]
    weights: Optional[list[float]] = None
    config: Optional[ConfigDocument] = None


class EvalRequest(BaseModel):
    predictions: DetectionsDocument
    ground_truth: DetectionsDocument
    config: Optional[ConfigDocument] = None


class EvalResponse(BaseModel):
    report: str
    result: EvalResultDocument


class PasteRequest(BaseModel):
    scene: SceneDocument
    sources: list[SceneDocument] = Field(default_factory=list)
    database: Optional[GtDatabaseDocument] = None
    quota: Optional[dict[str, int]] = None
    seed: Optional[int] = None
    include_database: bool = False
    config: Optional[ConfigDocument] = None


class PasteResponse(BaseModel):
    scene: SceneDocument
    requested: dict[str, int]
    accepted: dict[str, int]
    database: Optional[GtDatabaseDocument] = None


class SelftestCheckDoc(BaseModel):
    name: str
    passed: bool
    detail: str = ""


class SelftestResponse(BaseModel):
    passed: bool
    checks: list[SelftestCheckDoc]
