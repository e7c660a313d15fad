"""Deterministic synthetic scenes: a ring of surround cameras, a ground
disc plus boxes with surface-sampled points, and content-derived feature
images. A desk-scale stand-in for drive logs."""

from __future__ import annotations

import numpy as np

from .boxes import CLASS_NAMES, Box3D, bev_iou
from .config import PipelineConfig
from .depth import rasterize_lidar_depth
from .geometry import CameraModel, PointCloud, RigidTransform, rot_x, rot_z
from .lift_splat import FeatureImage
from .scene import Scene

# Nominal (l, w, h) per class, jittered per instance.
_CLASS_SIZES = {
    "car": (4.5, 1.9, 1.7),
    "truck": (7.0, 2.5, 2.8),
    "construction_vehicle": (6.0, 2.8, 3.0),
    "bus": (11.0, 2.9, 3.3),
    "trailer": (10.0, 2.8, 3.5),
    "barrier": (2.0, 0.5, 1.0),
    "motorcycle": (2.1, 0.8, 1.4),
    "bicycle": (1.7, 0.6, 1.3),
    "pedestrian": (0.7, 0.7, 1.75),
    "traffic_cone": (0.4, 0.4, 0.8),
}

_CAMERA_TILT = 0.12  # rad, pitched down toward the ground band


def ring_cameras(cfg: PipelineConfig, n_cameras: int = 6) -> list[CameraModel]:
    """Outward-facing cameras spaced evenly around the ego center.

    Intrinsics follow a 1600x900 sensor scaled to the configured image
    size; extrinsics place each camera 0.8 m from the origin, slightly
    above the voxel z window and pitched down into it.
    """
    fx = 1266.0 * cfg.image_width / 1600.0
    fy = 1266.0 * cfg.image_height / 900.0
    cx = cfg.image_width / 2.0
    cy = cfg.image_height / 2.0
    z_cam = cfg.voxel.z_max + 0.8
    cams = []
    # Base orientation: camera z looks along lidar +x, x right (-y), y down (-z).
    base = np.array([[0.0, 0.0, 1.0], [-1.0, 0.0, 0.0], [0.0, -1.0, 0.0]])
    for k in range(n_cameras):
        theta = 2.0 * np.pi * k / n_cameras
        rot_lidar_from_cam = rot_z(theta) @ base @ rot_x(-_CAMERA_TILT)
        center = np.array([0.8 * np.cos(theta), 0.8 * np.sin(theta), z_cam])
        lidar_from_cam = RigidTransform(rot_lidar_from_cam, center)
        rt = rot_lidar_from_cam.T
        cams.append(
            CameraModel(
                fx=fx,
                fy=fy,
                cx=cx,
                cy=cy,
                width=cfg.image_width,
                height=cfg.image_height,
                cam_from_lidar=RigidTransform(rt, -rt @ lidar_from_cam.translation),
            )
        )
    return cams


def _sample_boxes(rng: np.random.Generator, n_objects: int, ground_z: float, r_max: float):
    boxes: list[Box3D] = []
    for _ in range(n_objects):
        for _attempt in range(100):
            cls = CLASS_NAMES[int(rng.integers(0, len(CLASS_NAMES)))]
            base = _CLASS_SIZES[cls]
            size = tuple(float(d * rng.uniform(0.9, 1.1)) for d in base)
            r = rng.uniform(6.0, min(r_max, 45.0))
            phi = rng.uniform(-np.pi, np.pi)
            cand = Box3D(
                center=(r * np.cos(phi), r * np.sin(phi), ground_z + size[2] / 2.0),
                size=size,
                yaw=rng.uniform(-np.pi, np.pi),
                velocity=tuple(rng.normal(0.0, 2.0, 2)),
                class_name=cls,
                score=1.0,
            )
            if all(bev_iou(cand, b) == 0.0 for b in boxes):
                boxes.append(cand)
                break
    return boxes


def _box_surface_points(rng: np.random.Generator, box: Box3D, n: int) -> np.ndarray:
    """Points on the four side faces and the top, uniform per pick."""
    l, w, h = box.size
    face = rng.integers(0, 5, n)
    a = rng.uniform(-0.5, 0.5, n)
    b = rng.uniform(-0.5, 0.5, n)
    local = np.empty((n, 3))
    for i, f in enumerate(face):
        if f == 0:
            local[i] = (l / 2, a[i] * w, b[i] * h)
        elif f == 1:
            local[i] = (-l / 2, a[i] * w, b[i] * h)
        elif f == 2:
            local[i] = (a[i] * l, w / 2, b[i] * h)
        elif f == 3:
            local[i] = (a[i] * l, -w / 2, b[i] * h)
        else:
            local[i] = (a[i] * l, b[i] * w, h / 2)
    c, s = np.cos(box.yaw), np.sin(box.yaw)
    out = np.empty((n, 4))
    out[:, 0] = c * local[:, 0] - s * local[:, 1] + box.center[0]
    out[:, 1] = s * local[:, 0] + c * local[:, 1] + box.center[1]
    out[:, 2] = local[:, 2] + box.center[2]
    out[:, 3] = rng.uniform(0.3, 1.0, n)
    return out


def synth_features(scene: Scene, cfg: PipelineConfig) -> list[FeatureImage]:
    """Content-derived feature images: each camera's map encodes where the
    cloud projects (hit flag, normalized hit depth, hit-gated pixel
    coordinates). An empty cloud yields all-zero features."""
    centers = cfg.depth_bins.bin_centers()
    feats = []
    for cam in scene.cameras:
        grid, mask = rasterize_lidar_depth(cam, scene.cloud, cfg.feature_stride, cfg.depth_bins)
        h, w = mask.mask.shape
        hit = mask.mask.astype(np.float64)
        depth_norm = (grid.values @ centers) / cfg.depth_bins.d_max
        u_norm = (np.arange(w) + 0.5)[None, :] / w * hit
        v_norm = (np.arange(h) + 0.5)[:, None] / h * hit
        base = [hit, depth_norm, u_norm, np.broadcast_to(v_norm, (h, w))]
        chans = [base[i % len(base)] for i in range(cfg.feature_channels)]
        feats.append(FeatureImage(np.stack(chans, axis=2), cfg.feature_stride))
    return feats


def synth_scene(
    seed: int,
    n_objects: int,
    n_points: int,
    cfg: PipelineConfig = PipelineConfig(),
    sample_id: str | None = None,
    n_cameras: int = 6,
) -> Scene:
    """Deterministic scene: non-overlapping boxes, surface + ground points,
    a camera ring, and content-derived features. Same seed, same bits."""
    rng = np.random.default_rng(seed)
    ground_z = cfg.voxel.z_min + 0.2 * (cfg.voxel.z_max - cfg.voxel.z_min)
    r_max = min(-cfg.voxel.x_min, cfg.voxel.x_max, -cfg.voxel.y_min, cfg.voxel.y_max)
    boxes = _sample_boxes(rng, n_objects, ground_z, r_max)

    chunks = []
    n_ground = n_points if not boxes else int(n_points * 0.6)
    if n_ground > 0:
        r = 3.0 + (min(r_max, 50.0) - 3.0) * np.sqrt(rng.uniform(0.0, 1.0, n_ground))
        phi = rng.uniform(-np.pi, np.pi, n_ground)
        ground = np.empty((n_ground, 4))
        ground[:, 0] = r * np.cos(phi)
        ground[:, 1] = r * np.sin(phi)
        ground[:, 2] = ground_z + rng.normal(0.0, 0.02, n_ground)
        ground[:, 3] = rng.uniform(0.0, 1.0, n_ground)
        chunks.append(ground)
    if boxes:
        remaining = n_points - n_ground
        per_box = remaining // len(boxes)
        for i, box in enumerate(boxes):
            n = per_box + (1 if i < remaining % len(boxes) else 0)
            if n > 0:
                chunks.append(_box_surface_points(rng, box, n))
    cloud = PointCloud(np.concatenate(chunks, axis=0) if chunks else np.zeros((0, 4)))

    scene = Scene(
        sample_id=sample_id if sample_id is not None else f"synth-{seed:08d}",
        cloud=cloud,
        cameras=ring_cameras(cfg, n_cameras),
        boxes=boxes,
    )
    scene.features = synth_features(scene, cfg)
    return scene
