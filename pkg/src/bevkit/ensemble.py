"""Test-time augmentation (expand scenes, collapse detections back) and
weighted box fusion across detection sets.

TTA variants are the Cartesian product of yaw rotations and global scales
(optionally doubled by an x flip). Each variant transforms the point cloud,
ground-truth boxes and camera extrinsics consistently, so projecting a
transformed point through the updated extrinsics reproduces the original
pixel. WBF greedily clusters boxes by BEV IoU against the running fused
box and averages members with weights w_i * score_i.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .boxes import (
    CLASS_NAMES,
    Box3D,
    DetectionSet,
    bev_iou,
    normalize_yaw,
    transform_box,
    untransform_box,
)
from .geometry import CameraModel, PointCloud, RigidTransform, rot_z
from .lift_splat import FeatureImage
from .scene import Scene

_FLIP = np.diag([-1.0, 1.0, 1.0])


@dataclass(frozen=True)
class TtaConfig:
    yaw_rotations: tuple[float, ...] = (-np.pi / 8, 0.0, np.pi / 8)
    global_scales: tuple[float, ...] = (0.95, 1.0, 1.05)
    flip_x: bool = False

    def __post_init__(self):
        if not self.yaw_rotations or not self.global_scales:
            raise ValueError("rotation and scale lists must be non-empty")
        if not any(r == 0.0 for r in self.yaw_rotations) or not any(
            s == 1.0 for s in self.global_scales
        ):
            raise ValueError("the identity variant (rotation 0, scale 1) must be present")
        if min(self.global_scales) <= 0:
            raise ValueError("scales must be positive")


@dataclass(frozen=True)
class TransformRecord:
    """Exact parameters of one TTA variant (rotate, then scale, then flip)."""

    yaw_rot: float
    scale: float
    flip_x: bool

    @property
    def is_identity(self) -> bool:
        return self.yaw_rot == 0.0 and self.scale == 1.0 and not self.flip_x


@dataclass(frozen=True)
class WbfConfig:
    cluster_iou: float = 0.55
    model_weights: tuple[float, ...] | None = None
    score_mode: str = "weighted_mean"
    min_cluster_confidence: float = 0.0

    def __post_init__(self):
        if not (0.0 < self.cluster_iou < 1.0):
            raise ValueError("cluster_iou must be in (0,1)")
        if self.model_weights and min(self.model_weights) <= 0:
            raise ValueError("model weights must be positive")
        if self.score_mode != "weighted_mean":
            raise ValueError(f"unsupported score mode {self.score_mode!r}")


def _transform_cloud(cloud: PointCloud, rec: TransformRecord) -> PointCloud:
    out = cloud.points.copy()
    xyz = out[:, :3] @ rot_z(rec.yaw_rot).T * rec.scale
    if rec.flip_x:
        xyz[:, 0] = -xyz[:, 0]
    out[:, :3] = xyz
    return PointCloud(out)


def _transform_camera(cam: CameraModel, rec: TransformRecord) -> CameraModel:
    """Update the extrinsic (and mirror the principal point under a flip)
    so the variant scene projects consistently with the original."""
    rot = cam.cam_from_lidar.rotation @ rot_z(-rec.yaw_rot)
    trans = rec.scale * cam.cam_from_lidar.translation
    cx = cam.cx
    if rec.flip_x:
        rot = _FLIP @ rot @ _FLIP
        trans = _FLIP @ trans
        cx = cam.width - cam.cx
    return replace(cam, cx=cx, cam_from_lidar=RigidTransform(rot, trans))


def _transform_features(feat: FeatureImage, rec: TransformRecord) -> FeatureImage:
    if not rec.flip_x:
        return feat
    return FeatureImage(feat.data[:, ::-1, :].copy(), feat.stride)


def tta_expand(scene: Scene, cfg: TtaConfig) -> list[tuple[Scene, TransformRecord]]:
    """All TTA variants of a scene with their transform records.

    Variant order is rotations x scales x flip, each applied to points,
    ground-truth boxes, camera extrinsics and (under a flip) the feature
    maps.
    """
    flips = (False, True) if cfg.flip_x else (False,)
    out = []
    for rot in cfg.yaw_rotations:
        for scale in cfg.global_scales:
            for flip in flips:
                rec = TransformRecord(rot, scale, flip)
                variant = Scene(
                    sample_id=scene.sample_id,
                    cloud=_transform_cloud(scene.cloud, rec),
                    cameras=[_transform_camera(c, rec) for c in scene.cameras],
                    boxes=[transform_box(b, rot, scale, flip) for b in scene.boxes],
                    features=None
                    if scene.features is None
                    else [_transform_features(f, rec) for f in scene.features],
                )
                out.append((variant, rec))
    return out


def tta_collapse(
    det_sets: list[DetectionSet], records: list[TransformRecord]
) -> DetectionSet:
    """Map every box back through the inverse of its variant and pool them."""
    if len(det_sets) != len(records):
        raise ValueError(f"{len(det_sets)} detection sets vs {len(records)} records")
    if not det_sets:
        raise ValueError("nothing to collapse")
    sample_id = det_sets[0].sample_id
    boxes: list[Box3D] = []
    for ds, rec in zip(det_sets, records):
        if ds.sample_id != sample_id:
            raise ValueError("mismatched sample ids across variants")
        boxes.extend(untransform_box(b, rec.yaw_rot, rec.scale, rec.flip_x) for b in ds.boxes)
    return DetectionSet(sample_id, boxes)


def _fuse_cluster(members: list[tuple[Box3D, float]], seed_yaw: float, total_weight: float) -> Box3D:
    """Weighted average of cluster members; weights are w_i * score_i."""
    first = members[0][0]
    weighted = sum(w * b.score for b, w in members)
    score = min(1.0, weighted / total_weight)
    if len(members) == 1:
        return replace(first, score=score)
    ws = np.array([w * b.score for b, w in members])
    if ws.sum() == 0.0:  # all-zero scores: fall back to the raw model weights
        ws = np.array([w for _, w in members])
    centers = np.array([b.center for b, _ in members])
    sizes = np.array([b.size for b, _ in members])
    vels = np.array([b.velocity for b, _ in members])
    wsum = ws.sum()
    center = ws @ centers / wsum
    size = ws @ sizes / wsum
    vel = ws @ vels / wsum
    # Boxes are symmetric under a half-turn: align member headings to the
    # seed before taking the circular mean.
    yaws = np.array([b.yaw for b, _ in members])
    flip = np.cos(yaws - seed_yaw) < 0.0
    aligned = np.where(flip, yaws + np.pi, yaws)
    yaw = normalize_yaw(float(np.arctan2(ws @ np.sin(aligned), ws @ np.cos(aligned))))
    return Box3D(
        center=tuple(center),
        size=tuple(size),
        yaw=yaw,
        velocity=tuple(vel),
        class_name=first.class_name,
        score=score,
    )


def wbf(det_sets: list[DetectionSet], cfg: WbfConfig) -> DetectionSet:
    """Fuse detection sets from several models into weighted average boxes.

    Per class, boxes from all sets are visited by descending
    model_weight * score; each joins the first cluster whose current fused
    box overlaps it with BEV IoU above cluster_iou, otherwise it seeds a
    new cluster. The fused score divides by the total model weight, so a
    box only some models found is discounted. A single input set passes
    through unchanged.
    """
    if not det_sets:
        raise ValueError("need at least one detection set")
    sample_id = det_sets[0].sample_id
    for ds in det_sets:
        if ds.sample_id != sample_id:
            raise ValueError("all detection sets must share a sample id")
    weights = cfg.model_weights or tuple(1.0 for _ in det_sets)
    if len(weights) != len(det_sets):
        raise ValueError(f"{len(weights)} weights for {len(det_sets)} detection sets")
    if len(det_sets) == 1:
        return DetectionSet(sample_id, list(det_sets[0].boxes))

    total_weight = float(sum(weights))
    fused: list[Box3D] = []
    for cls in CLASS_NAMES:
        cands = [
            (w * b.score, si, bi, b, w)
            for si, (ds, w) in enumerate(zip(det_sets, weights))
            for bi, b in enumerate(ds.boxes)
            if b.class_name == cls
        ]
        cands.sort(key=lambda t: (-t[0], t[1], t[2]))
        clusters: list[dict] = []
        for _, _, _, box, w in cands:
            joined = False
            for cl in clusters:
                if bev_iou(cl["fused"], box) > cfg.cluster_iou:
                    cl["members"].append((box, w))
                    cl["fused"] = _fuse_cluster(cl["members"], cl["seed_yaw"], total_weight)
                    joined = True
                    break
            if not joined:
                clusters.append(
                    {
                        "members": [(box, w)],
                        "seed_yaw": box.yaw,
                        "fused": _fuse_cluster([(box, w)], box.yaw, total_weight),
                    }
                )
        fused.extend(cl["fused"] for cl in clusters)
    kept = [b for b in fused if b.score >= cfg.min_cluster_confidence]
    return DetectionSet(sample_id, kept)
