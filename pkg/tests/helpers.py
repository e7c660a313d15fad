"""Shared test utilities: box factories and independent geometric checks."""

import numpy as np

from bevkit.boxes import Box3D, CLASS_NAMES


def make_box(x=0.0, y=0.0, z=0.0, l=2.0, w=2.0, h=1.5, yaw=0.0, vx=0.0, vy=0.0,
             cls="car", score=1.0) -> Box3D:
    return Box3D(
        center=(x, y, z),
        size=(l, w, h),
        yaw=yaw,
        velocity=(vx, vy),
        class_name=cls,
        score=score,
    )


def random_box(rng: np.random.Generator, span=5.0, smin=0.5, smax=4.0,
               cls=None, score=None) -> Box3D:
    return Box3D(
        center=tuple(rng.uniform(-span, span, 3)),
        size=tuple(rng.uniform(smin, smax, 3)),
        yaw=float(rng.uniform(-np.pi, np.pi)),
        velocity=tuple(rng.normal(0.0, 2.0, 2)),
        class_name=cls if cls is not None else CLASS_NAMES[int(rng.integers(len(CLASS_NAMES)))],
        score=float(rng.uniform(0.0, 1.0)) if score is None else score,
    )


def point_in_rotated_rect(box: Box3D, pts: np.ndarray) -> np.ndarray:
    """Independent footprint membership test (local-frame half extents)."""
    rel = np.asarray(pts, dtype=float).reshape(-1, 2) - np.array(box.center[:2])
    c, s = np.cos(box.yaw), np.sin(box.yaw)
    lx = c * rel[:, 0] + s * rel[:, 1]
    ly = -s * rel[:, 0] + c * rel[:, 1]
    return (np.abs(lx) <= box.size[0] / 2) & (np.abs(ly) <= box.size[1] / 2)


def monte_carlo_bev_iou(a: Box3D, b: Box3D, rng: np.random.Generator,
                        n_samples: int = 1_000_000) -> float:
    """Area-sampling IoU oracle over the joint bounding rectangle."""
    from bevkit.boxes import bev_corners

    corners = np.vstack([bev_corners(a), bev_corners(b)])
    lo, hi = corners.min(axis=0), corners.max(axis=0)
    pts = rng.uniform(lo, hi, (n_samples, 2))
    in_a = point_in_rotated_rect(a, pts)
    in_b = point_in_rotated_rect(b, pts)
    either = np.count_nonzero(in_a | in_b)
    if either == 0:
        return 0.0
    return np.count_nonzero(in_a & in_b) / either
