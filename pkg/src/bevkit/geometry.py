"""Rigid transforms, pinhole cameras and point clouds.

Conventions: LiDAR frame is x forward, y left, z up. Camera frame is
z forward, x right, y down (standard pinhole, no distortion). All
operations are pure functions over immutable inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

# Points closer than 1 mm to the image plane are flagged invalid.
Z_EPS = 1e-3

_ORTHO_TOL = 1e-9


@dataclass(frozen=True)
class RigidTransform:
    """SE(3) pose: p_out = rotation @ p_in + translation."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        err = np.abs(r @ r.T - np.eye(3)).max()
        if err > 1e-6:
            raise ValueError(f"rotation is not orthonormal (max error {err:.3e})")
        if np.linalg.det(r) < 0:
            raise ValueError("rotation has negative determinant (reflection)")
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @staticmethod
    def identity() -> "RigidTransform":
        return RigidTransform(np.eye(3), np.zeros(3))

    def apply(self, pts: np.ndarray) -> np.ndarray:
        """Map (N,3) or (3,) points through the transform."""
        p = np.asarray(pts, dtype=np.float64)
        return p @ self.rotation.T + self.translation

    def is_orthonormal(self, tol: float = _ORTHO_TOL) -> bool:
        r = self.rotation
        return (
            np.abs(r @ r.T - np.eye(3)).max() <= tol
            and abs(np.linalg.det(r) - 1.0) <= tol
        )


def compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    """Transform applying b first, then a: (a*b).apply(p) == a.apply(b.apply(p))."""
    return RigidTransform(a.rotation @ b.rotation, a.rotation @ b.translation + a.translation)


def invert(t: RigidTransform) -> RigidTransform:
    rt = t.rotation.T
    return RigidTransform(rt, -rt @ t.translation)


def rot_x(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


@dataclass(frozen=True)
class CameraModel:
    """Pinhole intrinsics plus the LiDAR-to-camera extrinsic."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    cam_from_lidar: RigidTransform = field(default_factory=RigidTransform.identity)

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("image size must be positive")


@dataclass
class PointCloud:
    """N x 4 array of (x, y, z, intensity); coordinates in meters."""

    points: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.points, dtype=np.float64)
        if p.size == 0:
            p = p.reshape(0, 4)
        if p.ndim != 2 or p.shape[1] != 4:
            raise ValueError(f"point cloud must be (N,4), got {p.shape}")
        if not np.all(np.isfinite(p)):
            raise ValueError("point cloud contains non-finite values")
        self.points = p

    @property
    def xyz(self) -> np.ndarray:
        return self.points[:, :3]

    @property
    def intensity(self) -> np.ndarray:
        return self.points[:, 3]

    def __len__(self) -> int:
        return self.points.shape[0]

    @staticmethod
    def empty() -> "PointCloud":
        return PointCloud(np.zeros((0, 4)))


def transform_points(t: RigidTransform, cloud: PointCloud) -> PointCloud:
    """Apply a rigid transform to the coordinates; intensity is preserved."""
    out = cloud.points.copy()
    out[:, :3] = t.apply(cloud.xyz)
    return PointCloud(out)


class Projection(NamedTuple):
    """Per-point projection result; invalid points are flagged, never dropped."""

    u: np.ndarray
    v: np.ndarray
    depth: np.ndarray
    valid: np.ndarray


def project_to_image(cam: CameraModel, pts_cam: np.ndarray) -> Projection:
    """Project camera-frame points (N,3) to pixel coordinates.

    u = fx*x/z + cx, v = fy*y/z + cy, depth = z. A point is valid iff
    z > Z_EPS and the pixel falls inside [0,width) x [0,height).
    """
    p = np.asarray(pts_cam, dtype=np.float64).reshape(-1, 3)
    z = p[:, 2]
    safe_z = np.where(np.abs(z) > Z_EPS, z, 1.0)
    u = cam.fx * p[:, 0] / safe_z + cam.cx
    v = cam.fy * p[:, 1] / safe_z + cam.cy
    valid = (z > Z_EPS) & (u >= 0) & (u < cam.width) & (v >= 0) & (v < cam.height)
    return Projection(u=u, v=v, depth=z.copy(), valid=valid)


def unproject(cam: CameraModel, u: np.ndarray, v: np.ndarray, depth: np.ndarray) -> np.ndarray:
    """Inverse pinhole map: pixel (u,v) at depth d back to camera-frame (N,3)."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    d = np.asarray(depth, dtype=np.float64)
    x = (u - cam.cx) / cam.fx * d
    y = (v - cam.cy) / cam.fy * d
    return np.stack(np.broadcast_arrays(x, y, d), axis=-1)
