"""Sparse LiDAR depth maps, categorical depth distributions and rectification.

A depth grid stores one categorical distribution over depth bins per
feature pixel. LiDAR rasterization produces one-hot columns wherever a
point projects (minimum depth wins on collisions); rectification
overwrites the estimated distribution with the LiDAR one at labeled
pixels and keeps the estimate in the holes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import CameraModel, PointCloud, project_to_image


@dataclass(frozen=True)
class DepthBinSpec:
    """Uniform discretization of [d_min, d_max) into num_bins bins."""

    d_min: float = 1.0
    d_max: float = 61.0
    num_bins: int = 60

    def __post_init__(self):
        if not (0 < self.d_min < self.d_max):
            raise ValueError("need 0 < d_min < d_max")
        if self.num_bins < 2:
            raise ValueError("need at least 2 depth bins")

    @property
    def bin_width(self) -> float:
        return (self.d_max - self.d_min) / self.num_bins

    def bin_centers(self) -> np.ndarray:
        k = np.arange(self.num_bins, dtype=np.float64)
        return self.d_min + (k + 0.5) * self.bin_width

    def bin_index(self, depth) -> np.ndarray:
        """Bin of each depth, clamped into [0, num_bins-1]."""
        d = np.asarray(depth, dtype=np.float64)
        idx = np.floor((d - self.d_min) / self.bin_width).astype(np.int64)
        return np.clip(idx, 0, self.num_bins - 1)


@dataclass
class DepthGrid:
    """(H, W, D) nonnegative array; each pixel sums to 1, or to 0 if unlabeled."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 3:
            raise ValueError(f"depth grid must be (H,W,D), got {v.shape}")
        self.values = v

    @property
    def shape(self):
        return self.values.shape

    def is_normalized(self, tol: float = 1e-6) -> bool:
        sums = self.values.sum(axis=2)
        return bool(np.all((np.abs(sums - 1.0) <= tol) | (sums == 0.0)))


@dataclass
class MaskMap:
    """(H, W) array of {0,1}: 1 where at least one LiDAR point rasterized."""

    mask: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.mask)
        if m.ndim != 2:
            raise ValueError(f"mask must be (H,W), got {m.shape}")
        if not np.all((m == 0) | (m == 1)):
            raise ValueError("mask entries must be 0 or 1")
        self.mask = m.astype(np.uint8)


def depth_to_onehot(depth: float, spec: DepthBinSpec) -> np.ndarray:
    """One-hot bin vector for a single depth; out-of-range depths clamp."""
    if not np.isfinite(depth):
        raise ValueError("depth must be finite")
    out = np.zeros(spec.num_bins)
    out[int(spec.bin_index(depth))] = 1.0
    return out


def rasterize_lidar_depth(
    cam: CameraModel, pts_lidar: PointCloud, stride: int, spec: DepthBinSpec
) -> tuple[DepthGrid, MaskMap]:
    """Project a LiDAR cloud into a one-hot depth grid at feature resolution.

    Each valid projected point lands in feature pixel (u//stride, v//stride);
    the minimum camera-frame depth among contributors wins, and that depth
    becomes a one-hot bin column. Pixels nothing projects to stay all-zero
    with mask 0.
    """
    if stride < 1:
        raise ValueError("stride must be >= 1")
    if cam.width % stride or cam.height % stride:
        raise ValueError(
            f"stride {stride} does not divide image size {cam.width}x{cam.height}"
        )
    wf, hf = cam.width // stride, cam.height // stride
    values = np.zeros((hf, wf, spec.num_bins))
    mask = np.zeros((hf, wf), dtype=np.uint8)

    if len(pts_lidar) == 0:
        return DepthGrid(values), MaskMap(mask)

    pts_cam = cam.cam_from_lidar.apply(pts_lidar.xyz)
    proj = project_to_image(cam, pts_cam)
    sel = proj.valid
    if not np.any(sel):
        return DepthGrid(values), MaskMap(mask)

    uf = np.floor(proj.u[sel] / stride).astype(np.int64)
    vf = np.floor(proj.v[sel] / stride).astype(np.int64)
    d = proj.depth[sel]

    # Min depth per pixel: sort by (pixel, depth) and keep the first entry.
    pix = vf * wf + uf
    order = np.lexsort((d, pix))
    pix, d = pix[order], d[order]
    first = np.ones(len(pix), dtype=bool)
    first[1:] = pix[1:] != pix[:-1]
    pix, d = pix[first], d[first]

    rows, cols = pix // wf, pix % wf
    values[rows, cols, spec.bin_index(d)] = 1.0
    mask[rows, cols] = 1
    return DepthGrid(values), MaskMap(mask)


def rectify_depth(d_cam: DepthGrid, d_lid: DepthGrid, m: MaskMap) -> DepthGrid:
    """Replace estimated depth by LiDAR depth wherever the mask is set.

    Output pixel is d_lid where mask=1 and d_cam where mask=0; with a
    normalized d_cam the output is normalized everywhere. Idempotent.
    """
    if d_cam.shape != d_lid.shape:
        raise ValueError(f"shape mismatch: {d_cam.shape} vs {d_lid.shape}")
    if m.mask.shape != d_cam.shape[:2]:
        raise ValueError(f"mask shape {m.mask.shape} does not match grid {d_cam.shape[:2]}")
    sel = m.mask.astype(bool)[:, :, None]
    return DepthGrid(np.where(sel, d_lid.values, d_cam.values))
