"""Wire/file document schemas and their converters to core types.

Every persisted artifact is a versioned JSON document: diffable metadata
with bulk arrays embedded as base64 little-endian float32, row major.
The same models validate service payloads and files on disk.
"""

from __future__ import annotations

import base64
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, Field

from .augment import FadeSchedule, GtDatabase, GtEntry
from .boxes import Box3D, DetectionSet
from .config import PipelineConfig
from .depth import DepthBinSpec
from .ensemble import TtaConfig, WbfConfig
from .geometry import CameraModel, PointCloud, RigidTransform
from .lidar_bev import VoxelSpec
from .lift_splat import BevGrid, BevGridSpec, FeatureImage
from .metrics import EvalConfig, EvalResult
from .scene import Scene

FORMAT_VERSION = 1


class ArrayBlob(BaseModel):
    """Base64 of little-endian float32 values in row-major order."""

    shape: list[int]
    dtype: Literal["f4"] = "f4"
    data: str = ""

    @classmethod
    def from_array(cls, a: np.ndarray) -> "ArrayBlob":
        arr = np.ascontiguousarray(a, dtype="<f4")
        return cls(shape=list(arr.shape), data=base64.b64encode(arr.tobytes()).decode("ascii"))

    def to_array(self) -> np.ndarray:
        n = int(np.prod(self.shape)) if self.shape else 1
        raw = base64.b64decode(self.data.encode("ascii"), validate=True)
        if len(raw) != 4 * n:
            raise ValueError(
                f"array blob holds {len(raw)} bytes but shape {self.shape} needs {4 * n}"
            )
        return np.frombuffer(raw, dtype="<f4").astype(np.float64).reshape(self.shape)


class CameraDoc(BaseModel):
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    rotation: list[list[float]]  # cam_from_lidar, row major 3x3
    translation: list[float]


class BoxDoc(BaseModel):
    translation: list[float]  # x, y, z center (m)
    size: list[float]  # l, w, h (m)
    yaw: float
    velocity: list[float]  # vx, vy (m/s)
    class_name: str
    score: float = 1.0


class FeatureDoc(BaseModel):
    stride: int
    values: ArrayBlob


class SceneDocument(BaseModel):
    format_version: int = FORMAT_VERSION
    kind: Literal["scene"] = "scene"
    sample_id: str
    points: ArrayBlob
    cameras: list[CameraDoc]
    boxes: list[BoxDoc] = Field(default_factory=list)
    features: Optional[list[FeatureDoc]] = None


class DetectionSampleDoc(BaseModel):
    sample_id: str
    boxes: list[BoxDoc] = Field(default_factory=list)


class DetectionsDocument(BaseModel):
    format_version: int = FORMAT_VERSION
    kind: Literal["detections"] = "detections"
    samples: list[DetectionSampleDoc] = Field(default_factory=list)


class GridDocument(BaseModel):
    format_version: int = FORMAT_VERSION
    kind: Literal["grid"] = "grid"
    name: str = "grid"
    x_min: float
    x_max: float
    y_min: float
    y_max: float
    cell_size: float
    shape: list[int]
    values: ArrayBlob


class GtEntryDoc(BaseModel):
    box: BoxDoc
    points: ArrayBlob


class GtDatabaseDocument(BaseModel):
    format_version: int = FORMAT_VERSION
    kind: Literal["gt_database"] = "gt_database"
    classes: dict[str, list[GtEntryDoc]] = Field(default_factory=dict)


class TtaDoc(BaseModel):
    yaw_rotations: list[float] = [-np.pi / 8, 0.0, np.pi / 8]
    global_scales: list[float] = [0.95, 1.0, 1.05]
    flip_x: bool = False


class WbfDoc(BaseModel):
    cluster_iou: float = 0.55
    model_weights: Optional[list[float]] = None
    score_mode: str = "weighted_mean"
    min_cluster_confidence: float = 0.0


class EvalDoc(BaseModel):
    dist_thresholds: list[float] = [0.5, 1.0, 2.0, 4.0]
    recall_range: list[float] = [0.1, 1.0]
    min_precision: float = 0.1
    tp_threshold: float = 2.0
    include_attribute_error: bool = False


class FadeDoc(BaseModel):
    total_epochs: int = 20
    fade_start_epoch: int = 15


class ConfigDocument(BaseModel):
    format_version: int = FORMAT_VERSION
    kind: Literal["config"] = "config"
    image_width: int = 704
    image_height: int = 256
    feature_stride: int = 8
    feature_channels: int = 4
    depth_d_min: float = 1.0
    depth_d_max: float = 61.0
    depth_num_bins: int = 60
    voxel_size: list[float] = [0.075, 0.075, 0.2]
    x_range: list[float] = [-54.0, 54.0]
    y_range: list[float] = [-54.0, 54.0]
    z_range: list[float] = [-5.0, -3.0]
    bev_cell_size: float = 0.6
    pyramid_strides: list[int] = [1, 2, 4, 8]
    fusion_strides: list[int] = [4, 8]
    nms_iou_threshold: float = 0.2
    nms_score_threshold: float = 0.0
    tta: TtaDoc = Field(default_factory=TtaDoc)
    wbf: WbfDoc = Field(default_factory=WbfDoc)
    eval: EvalDoc = Field(default_factory=EvalDoc)
    fade: FadeDoc = Field(default_factory=FadeDoc)
    paste_quota: dict[str, int] = {"car": 2, "pedestrian": 2, "traffic_cone": 2}
    seed: int = 0


class DiagnosticsDocument(BaseModel):
    mask_coverage: list[float] = Field(default_factory=list)
    occupied_voxels: dict[str, int] = Field(default_factory=dict)
    camera_nonzero_cells: int = 0
    lidar_nonzero_cells: int = 0
    fused_nonzero_cells: int = 0
    checksums: dict[str, float] = Field(default_factory=dict)


class EvalResultDocument(BaseModel):
    mean_ap: float
    nds: float
    per_class_ap: dict[str, dict[str, float]]
    per_class_ap_mean: dict[str, float]
    per_class_errors: dict[str, dict[str, float]]
    mean_errors: dict[str, float]
    n_gt: dict[str, int]


# --- converters: documents <-> core types ---------------------------------


def camera_to_doc(cam: CameraModel) -> CameraDoc:
    return CameraDoc(
        fx=float(cam.fx),
        fy=float(cam.fy),
        cx=float(cam.cx),
        cy=float(cam.cy),
        width=cam.width,
        height=cam.height,
        rotation=[[float(v) for v in row] for row in cam.cam_from_lidar.rotation],
        translation=[float(v) for v in cam.cam_from_lidar.translation],
    )


def doc_to_camera(doc: CameraDoc) -> CameraModel:
    return CameraModel(
        fx=doc.fx,
        fy=doc.fy,
        cx=doc.cx,
        cy=doc.cy,
        width=doc.width,
        height=doc.height,
        cam_from_lidar=RigidTransform(np.array(doc.rotation), np.array(doc.translation)),
    )


def box_to_doc(box: Box3D) -> BoxDoc:
    return BoxDoc(
        translation=list(box.center),
        size=list(box.size),
        yaw=box.yaw,
        velocity=list(box.velocity),
        class_name=box.class_name,
        score=box.score,
    )


def doc_to_box(doc: BoxDoc) -> Box3D:
    if len(doc.translation) != 3 or len(doc.size) != 3 or len(doc.velocity) != 2:
        raise ValueError("box fields must be translation[3], size[3], velocity[2]")
    return Box3D(
        center=tuple(doc.translation),
        size=tuple(doc.size),
        yaw=doc.yaw,
        velocity=tuple(doc.velocity),
        class_name=doc.class_name,
        score=doc.score,
    )


def scene_to_doc(scene: Scene) -> SceneDocument:
    return SceneDocument(
        sample_id=scene.sample_id,
        points=ArrayBlob.from_array(scene.cloud.points),
        cameras=[camera_to_doc(c) for c in scene.cameras],
        boxes=[box_to_doc(b) for b in scene.boxes],
        features=None
        if scene.features is None
        else [
            FeatureDoc(stride=f.stride, values=ArrayBlob.from_array(f.data))
            for f in scene.features
        ],
    )


def doc_to_scene(doc: SceneDocument) -> Scene:
    pts = doc.points.to_array()
    if pts.ndim != 2 or (pts.size and pts.shape[1] != 4):
        raise ValueError(f"scene points must be (N,4), got shape {doc.points.shape}")
    return Scene(
        sample_id=doc.sample_id,
        cloud=PointCloud(pts.reshape(-1, 4)),
        cameras=[doc_to_camera(c) for c in doc.cameras],
        boxes=[doc_to_box(b) for b in doc.boxes],
        features=None
        if doc.features is None
        else [FeatureImage(f.values.to_array(), f.stride) for f in doc.features],
    )


def detections_to_doc(sets: list[DetectionSet]) -> DetectionsDocument:
    return DetectionsDocument(
        samples=[
            DetectionSampleDoc(sample_id=s.sample_id, boxes=[box_to_doc(b) for b in s.boxes])
            for s in sets
        ]
    )


def doc_to_detections(doc: DetectionsDocument) -> list[DetectionSet]:
    return [
        DetectionSet(s.sample_id, [doc_to_box(b) for b in s.boxes]) for s in doc.samples
    ]


def grid_to_doc(grid: BevGrid, name: str = "grid") -> GridDocument:
    return GridDocument(
        name=name,
        x_min=grid.spec.x_min,
        x_max=grid.spec.x_max,
        y_min=grid.spec.y_min,
        y_max=grid.spec.y_max,
        cell_size=grid.spec.cell_size,
        shape=list(grid.data.shape),
        values=ArrayBlob.from_array(grid.data),
    )


def doc_to_grid(doc: GridDocument) -> BevGrid:
    data = doc.values.to_array()
    if list(data.shape) != list(doc.shape) or data.ndim != 3:
        raise ValueError(f"grid data shape {data.shape} does not match header {doc.shape}")
    spec = BevGridSpec(
        x_min=doc.x_min,
        x_max=doc.x_max,
        y_min=doc.y_min,
        y_max=doc.y_max,
        cell_size=doc.cell_size,
        channels=doc.shape[2],
    )
    return BevGrid(spec, data)


def database_to_doc(db: GtDatabase) -> GtDatabaseDocument:
    return GtDatabaseDocument(
        classes={
            cls: [
                GtEntryDoc(box=box_to_doc(e.box), points=ArrayBlob.from_array(e.local_points))
                for e in entries
            ]
            for cls, entries in sorted(db.entries.items())
        }
    )


def doc_to_database(doc: GtDatabaseDocument) -> GtDatabase:
    return GtDatabase(
        entries={
            cls: [GtEntry(doc_to_box(e.box), e.points.to_array().reshape(-1, 4)) for e in entries]
            for cls, entries in doc.classes.items()
        }
    )


def config_to_doc(cfg: PipelineConfig) -> ConfigDocument:
    return ConfigDocument(
        image_width=cfg.image_width,
        image_height=cfg.image_height,
        feature_stride=cfg.feature_stride,
        feature_channels=cfg.feature_channels,
        depth_d_min=cfg.depth_bins.d_min,
        depth_d_max=cfg.depth_bins.d_max,
        depth_num_bins=cfg.depth_bins.num_bins,
        voxel_size=[cfg.voxel.vx, cfg.voxel.vy, cfg.voxel.vz],
        x_range=[cfg.voxel.x_min, cfg.voxel.x_max],
        y_range=[cfg.voxel.y_min, cfg.voxel.y_max],
        z_range=[cfg.voxel.z_min, cfg.voxel.z_max],
        bev_cell_size=cfg.bev_cell_size,
        pyramid_strides=list(cfg.pyramid_strides),
        fusion_strides=list(cfg.fusion_strides),
        nms_iou_threshold=cfg.nms_iou_threshold,
        nms_score_threshold=cfg.nms_score_threshold,
        tta=TtaDoc(
            yaw_rotations=list(cfg.tta.yaw_rotations),
            global_scales=list(cfg.tta.global_scales),
            flip_x=cfg.tta.flip_x,
        ),
        wbf=WbfDoc(
            cluster_iou=cfg.wbf.cluster_iou,
            model_weights=None if cfg.wbf.model_weights is None else list(cfg.wbf.model_weights),
            score_mode=cfg.wbf.score_mode,
            min_cluster_confidence=cfg.wbf.min_cluster_confidence,
        ),
        eval=EvalDoc(
            dist_thresholds=list(cfg.eval.dist_thresholds),
            recall_range=list(cfg.eval.recall_range),
            min_precision=cfg.eval.min_precision,
            tp_threshold=cfg.eval.tp_threshold,
            include_attribute_error=cfg.eval.include_attribute_error,
        ),
        fade=FadeDoc(
            total_epochs=cfg.fade.total_epochs, fade_start_epoch=cfg.fade.fade_start_epoch
        ),
        paste_quota=dict(cfg.paste_quota),
        seed=cfg.seed,
    )


def doc_to_config(doc: ConfigDocument) -> PipelineConfig:
    return PipelineConfig(
        image_width=doc.image_width,
        image_height=doc.image_height,
        feature_stride=doc.feature_stride,
        feature_channels=doc.feature_channels,
        depth_bins=DepthBinSpec(doc.depth_d_min, doc.depth_d_max, doc.depth_num_bins),
        voxel=VoxelSpec(
            vx=doc.voxel_size[0],
            vy=doc.voxel_size[1],
            vz=doc.voxel_size[2],
            x_min=doc.x_range[0],
            x_max=doc.x_range[1],
            y_min=doc.y_range[0],
            y_max=doc.y_range[1],
            z_min=doc.z_range[0],
            z_max=doc.z_range[1],
        ),
        bev_cell_size=doc.bev_cell_size,
        pyramid_strides=tuple(doc.pyramid_strides),
        fusion_strides=tuple(doc.fusion_strides),
        nms_iou_threshold=doc.nms_iou_threshold,
        nms_score_threshold=doc.nms_score_threshold,
        tta=TtaConfig(
            yaw_rotations=tuple(doc.tta.yaw_rotations),
            global_scales=tuple(doc.tta.global_scales),
            flip_x=doc.tta.flip_x,
        ),
        wbf=WbfConfig(
            cluster_iou=doc.wbf.cluster_iou,
            model_weights=None if doc.wbf.model_weights is None else tuple(doc.wbf.model_weights),
            score_mode=doc.wbf.score_mode,
            min_cluster_confidence=doc.wbf.min_cluster_confidence,
        ),
        eval=EvalConfig(
            dist_thresholds=tuple(doc.eval.dist_thresholds),
            recall_range=tuple(doc.eval.recall_range),
            min_precision=doc.eval.min_precision,
            tp_threshold=doc.eval.tp_threshold,
            include_attribute_error=doc.eval.include_attribute_error,
        ),
        fade=FadeSchedule(doc.fade.total_epochs, doc.fade.fade_start_epoch),
        paste_quota=dict(doc.paste_quota),
        seed=doc.seed,
    )


def eval_result_to_doc(result: EvalResult) -> EvalResultDocument:
    return EvalResultDocument(
        mean_ap=result.mean_ap,
        nds=result.nds,
        per_class_ap={
            cls: {f"{th:g}": ap for th, ap in ths.items()}
            for cls, ths in result.per_class_ap.items()
        },
        per_class_ap_mean=result.per_class_ap_mean,
        per_class_errors=result.per_class_errors,
        mean_errors=result.mean_errors,
        n_gt=result.n_gt,
    )
