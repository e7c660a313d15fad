"""Oriented 3D boxes: BEV polygon IoU, 3D IoU, greedy NMS and the
rotate/scale/flip transform used by test-time augmentation.

Boxes live in the LiDAR frame; length runs along the heading. The
BEV footprint is a counter-clockwise rectangle and IoU is computed by
Sutherland-Hodgman clipping of the two convex footprints.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

CLASS_NAMES = (
    "car",
    "truck",
    "construction_vehicle",
    "bus",
    "trailer",
    "barrier",
    "motorcycle",
    "bicycle",
    "pedestrian",
    "traffic_cone",
)


def normalize_yaw(yaw: float) -> float:
    """Wrap an angle into (-pi, pi]; already-normalized values pass unchanged."""
    if -np.pi < yaw <= np.pi:
        return float(yaw)
    return float(np.pi - np.mod(np.pi - yaw, 2.0 * np.pi))


@dataclass(frozen=True)
class Box3D:
    """Oriented box: center (m), size l/w/h (m), yaw (rad), velocity (m/s)."""

    center: tuple[float, float, float]
    size: tuple[float, float, float]
    yaw: float
    velocity: tuple[float, float] = (0.0, 0.0)
    class_name: str = "car"
    score: float = 1.0

    def __post_init__(self):
        if min(self.size) <= 0:
            raise ValueError(f"box size must be positive, got {self.size}")
        if self.class_name not in CLASS_NAMES:
            raise ValueError(f"unknown class {self.class_name!r}")
        if not (0.0 <= self.score <= 1.0):
            raise ValueError(f"score must be in [0,1], got {self.score}")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        object.__setattr__(self, "size", tuple(float(s) for s in self.size))
        object.__setattr__(self, "velocity", tuple(float(v) for v in self.velocity))
        object.__setattr__(self, "yaw", normalize_yaw(self.yaw))

    @property
    def class_id(self) -> int:
        return CLASS_NAMES.index(self.class_name)

    @property
    def volume(self) -> float:
        l, w, h = self.size
        return l * w * h

    @property
    def z_range(self) -> tuple[float, float]:
        return (self.center[2] - self.size[2] / 2.0, self.center[2] + self.size[2] / 2.0)


@dataclass
class DetectionSet:
    """All boxes predicted (or annotated) for one sample."""

    sample_id: str
    boxes: list[Box3D]


def bev_corners(box: Box3D) -> np.ndarray:
    """Counter-clockwise (4,2) footprint corners of the rotated l x w rectangle."""
    l, w = box.size[0], box.size[1]
    local = np.array(
        [[l / 2, w / 2], [-l / 2, w / 2], [-l / 2, -w / 2], [l / 2, -w / 2]]
    )
    c, s = np.cos(box.yaw), np.sin(box.yaw)
    rot = np.array([[c, -s], [s, c]])
    return local @ rot.T + np.array(box.center[:2])


def _polygon_area(poly: np.ndarray) -> float:
    """Shoelace area of a CCW polygon; 0 for fewer than 3 vertices."""
    if len(poly) < 3:
        return 0.0
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _clip_polygon(subject: np.ndarray, clip: np.ndarray) -> np.ndarray:
    """Sutherland-Hodgman: clip a polygon against a convex CCW polygon."""
    output = list(subject)
    n = len(clip)
    for i in range(n):
        if not output:
            break
        a, b = clip[i], clip[(i + 1) % n]
        edge = b - a
        inputs, output = output, []
        prev = inputs[-1]
        prev_side = edge[0] * (prev[1] - a[1]) - edge[1] * (prev[0] - a[0])
        for cur in inputs:
            cur_side = edge[0] * (cur[1] - a[1]) - edge[1] * (cur[0] - a[0])
            if cur_side >= 0:
                if prev_side < 0:
                    t = prev_side / (prev_side - cur_side)
                    output.append(prev + t * (cur - prev))
                output.append(cur)
            elif prev_side >= 0:
                t = prev_side / (prev_side - cur_side)
                output.append(prev + t * (cur - prev))
            prev, prev_side = cur, cur_side
    return np.array(output) if output else np.zeros((0, 2))


def bev_intersection_area(a: Box3D, b: Box3D) -> float:
    # clip in a canonical order so the result is exactly symmetric in (a, b)
    if (a.center, a.size, a.yaw) > (b.center, b.size, b.yaw):
        a, b = b, a
    return _polygon_area(_clip_polygon(bev_corners(a), bev_corners(b)))


def bev_iou(a: Box3D, b: Box3D) -> float:
    """Rotated-rectangle IoU of the two BEV footprints, in [0, 1]."""
    inter = bev_intersection_area(a, b)
    area_a = a.size[0] * a.size[1]
    area_b = b.size[0] * b.size[1]
    union = area_a + area_b - inter
    if union <= 0:
        return 0.0
    return float(min(max(inter / union, 0.0), 1.0))


def iou3d(a: Box3D, b: Box3D) -> float:
    """Volumetric IoU: BEV intersection area times z overlap over the union."""
    inter_area = bev_intersection_area(a, b)
    za, zb = a.z_range, b.z_range
    dz = max(0.0, min(za[1], zb[1]) - max(za[0], zb[0]))
    inter = inter_area * dz
    union = a.volume + b.volume - inter
    if union <= 0:
        return 0.0
    return float(min(max(inter / union, 0.0), 1.0))


def nms(
    dets: DetectionSet,
    iou_threshold: float,
    per_class: bool = True,
    score_threshold: float = 0.0,
) -> DetectionSet:
    """Greedy non-maximum suppression on BEV IoU.

    Boxes are visited by descending score (ties broken by input index); a
    box is kept iff its IoU with every already-kept box (of the same class
    when per_class) is <= iou_threshold.
    """
    if not (0.0 <= iou_threshold <= 1.0):
        raise ValueError("iou_threshold must be in [0,1]")
    order = sorted(
        (i for i, b in enumerate(dets.boxes) if b.score >= score_threshold),
        key=lambda i: (-dets.boxes[i].score, i),
    )
    kept: list[Box3D] = []
    for i in order:
        cand = dets.boxes[i]
        suppressed = any(
            (not per_class or k.class_name == cand.class_name)
            and bev_iou(cand, k) > iou_threshold
            for k in kept
        )
        if not suppressed:
            kept.append(cand)
    return DetectionSet(dets.sample_id, kept)


def transform_box(box: Box3D, yaw_rot: float, scale: float, flip_x: bool) -> Box3D:
    """Rotate about the origin, scale globally, then optionally mirror in x.

    The flip negates x of center and velocity and maps the heading
    yaw -> pi - yaw; sizes scale homogeneously.
    """
    if scale <= 0:
        raise ValueError("scale must be positive")
    c, s = np.cos(yaw_rot), np.sin(yaw_rot)
    x, y, z = box.center
    cx = scale * (c * x - s * y)
    cy = scale * (s * x + c * y)
    cz = scale * z
    vx, vy = box.velocity
    nvx = scale * (c * vx - s * vy)
    nvy = scale * (s * vx + c * vy)
    yaw = box.yaw + yaw_rot
    if flip_x:
        cx, nvx = -cx, -nvx
        yaw = np.pi - yaw
    return replace(
        box,
        center=(cx, cy, cz),
        size=tuple(scale * d for d in box.size),
        yaw=normalize_yaw(yaw),
        velocity=(nvx, nvy),
    )


def untransform_box(box: Box3D, yaw_rot: float, scale: float, flip_x: bool) -> Box3D:
    """Exact inverse of transform_box with the same parameters."""
    if flip_x:
        box = replace(
            box,
            center=(-box.center[0], box.center[1], box.center[2]),
            yaw=normalize_yaw(np.pi - box.yaw),
            velocity=(-box.velocity[0], box.velocity[1]),
        )
    return transform_box(box, -yaw_rot, 1.0 / scale, False)


def corners_3d(box: Box3D) -> np.ndarray:
    """(8,3) corners: BEV footprint at bottom then top z."""
    bev = bev_corners(box)
    z0, z1 = box.z_range
    bottom = np.column_stack([bev, np.full(4, z0)])
    top = np.column_stack([bev, np.full(4, z1)])
    return np.vstack([bottom, top])


def points_in_box(box: Box3D, xyz: np.ndarray) -> np.ndarray:
    """Boolean mask of points inside the oriented box (closed boundary)."""
    p = np.asarray(xyz, dtype=np.float64).reshape(-1, 3)
    rel = p - np.array(box.center)
    c, s = np.cos(box.yaw), np.sin(box.yaw)
    lx = c * rel[:, 0] + s * rel[:, 1]
    ly = -s * rel[:, 0] + c * rel[:, 1]
    l, w, h = box.size
    return (
        (np.abs(lx) <= l / 2) & (np.abs(ly) <= w / 2) & (np.abs(rel[:, 2]) <= h / 2)
    )


def box_local_points(box: Box3D, points: np.ndarray) -> np.ndarray:
    """Map (N,4) scene-frame points into the box-local frame (yaw-aligned)."""
    p = np.asarray(points, dtype=np.float64).reshape(-1, 4)
    rel = p[:, :3] - np.array(box.center)
    c, s = np.cos(box.yaw), np.sin(box.yaw)
    out = p.copy()
    out[:, 0] = c * rel[:, 0] + s * rel[:, 1]
    out[:, 1] = -s * rel[:, 0] + c * rel[:, 1]
    out[:, 2] = rel[:, 2]
    return out


def box_world_points(box: Box3D, local: np.ndarray) -> np.ndarray:
    """Inverse of box_local_points."""
    p = np.asarray(local, dtype=np.float64).reshape(-1, 4)
    c, s = np.cos(box.yaw), np.sin(box.yaw)
    out = p.copy()
    out[:, 0] = c * p[:, 0] - s * p[:, 1] + box.center[0]
    out[:, 1] = s * p[:, 0] + c * p[:, 1] + box.center[1]
    out[:, 2] = p[:, 2] + box.center[2]
    return out
