"""Camera-to-BEV view transform: frustum construction, depth-weighted
lifting of image features, and scatter-sum splatting onto a ground-plane grid.

Splatting collapses height by plain summation; accumulation follows the
fixed (camera, u, v, depth-bin) ascending order so results are bit-exact
and reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .depth import DepthBinSpec, DepthGrid
from .geometry import CameraModel, invert, unproject


@dataclass(frozen=True)
class BevGridSpec:
    """Metric window on the ground plane with square cells."""

    x_min: float = -54.0
    x_max: float = 54.0
    y_min: float = -54.0
    y_max: float = 54.0
    cell_size: float = 0.6
    channels: int = 1

    def __post_init__(self):
        if self.cell_size <= 0:
            raise ValueError("cell_size must be positive")
        for lo, hi, name in ((self.x_min, self.x_max, "x"), (self.y_min, self.y_max, "y")):
            n = (hi - lo) / self.cell_size
            if hi <= lo or abs(n - round(n)) > 1e-6:
                raise ValueError(f"{name} range must be a positive multiple of cell_size")
        if self.channels < 1:
            raise ValueError("channels must be >= 1")

    @property
    def nx(self) -> int:
        return int(round((self.x_max - self.x_min) / self.cell_size))

    @property
    def ny(self) -> int:
        return int(round((self.y_max - self.y_min) / self.cell_size))

    def with_channels(self, channels: int) -> "BevGridSpec":
        return BevGridSpec(self.x_min, self.x_max, self.y_min, self.y_max, self.cell_size, channels)

    def same_window(self, other: "BevGridSpec", tol: float = 1e-9) -> bool:
        return (
            abs(self.x_min - other.x_min) <= tol
            and abs(self.x_max - other.x_max) <= tol
            and abs(self.y_min - other.y_min) <= tol
            and abs(self.y_max - other.y_max) <= tol
        )


@dataclass
class BevGrid:
    """Dense (X, Y, C) feature map over a BevGridSpec window."""

    spec: BevGridSpec
    data: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.data, dtype=np.float64)
        expected = (self.spec.nx, self.spec.ny, self.spec.channels)
        if d.shape != expected:
            raise ValueError(f"grid data shape {d.shape} does not match spec {expected}")
        if not np.all(np.isfinite(d)):
            raise ValueError("grid contains non-finite values")
        self.data = d

    @staticmethod
    def zeros(spec: BevGridSpec) -> "BevGrid":
        return BevGrid(spec, np.zeros((spec.nx, spec.ny, spec.channels)))


@dataclass
class FeatureImage:
    """(H, W, C) feature map at `stride` times coarser than the input image."""

    data: np.ndarray
    stride: int = 1

    def __post_init__(self):
        d = np.asarray(self.data, dtype=np.float64)
        if d.ndim != 3:
            raise ValueError(f"feature image must be (H,W,C), got {d.shape}")
        self.data = d

    @property
    def shape(self):
        return self.data.shape


@dataclass
class Frustum:
    """(H, W, D, 3) LiDAR-frame coordinates of every (pixel, depth-bin) sample."""

    coords: np.ndarray
    camera_index: int = 0

    def __post_init__(self):
        c = np.asarray(self.coords, dtype=np.float64)
        if c.ndim != 4 or c.shape[3] != 3:
            raise ValueError(f"frustum coords must be (H,W,D,3), got {c.shape}")
        self.coords = c


def build_frustum(
    cam: CameraModel, stride: int, spec: DepthBinSpec, camera_index: int = 0
) -> Frustum:
    """Unproject every feature-pixel center at every bin-center depth.

    Feature pixel (i, j) has its center at image pixel ((j+0.5)*stride,
    (i+0.5)*stride); coordinates come out in the LiDAR frame.
    """
    if stride < 1 or cam.width % stride or cam.height % stride:
        raise ValueError(f"stride {stride} does not divide image size")
    wf, hf = cam.width // stride, cam.height // stride
    u = (np.arange(wf, dtype=np.float64) + 0.5) * stride
    v = (np.arange(hf, dtype=np.float64) + 0.5) * stride
    d = spec.bin_centers()
    uu = u[None, :, None]
    vv = v[:, None, None]
    dd = d[None, None, :]
    pts_cam = unproject(cam, uu, vv, dd)  # (H, W, D, 3)
    lidar_from_cam = invert(cam.cam_from_lidar)
    coords = pts_cam @ lidar_from_cam.rotation.T + lidar_from_cam.translation
    return Frustum(coords, camera_index)


def lift(features: FeatureImage, depth: DepthGrid) -> np.ndarray:
    """Weight each pixel's feature vector by its depth distribution: (H,W,D,C)."""
    fh, fw, _ = features.shape
    dh, dw, _ = depth.shape
    if (fh, fw) != (dh, dw):
        raise ValueError(f"feature {features.shape[:2]} vs depth {depth.shape[:2]} mismatch")
    return depth.values[:, :, :, None] * features.data[:, :, None, :]


def splat(
    lifted: np.ndarray,
    frustum: Frustum,
    spec: BevGridSpec,
    z_window: tuple[float, float] | None = None,
) -> BevGrid:
    """Scatter-sum lifted features into BEV cells (height is ignored).

    A sample at (x, y, z) inside the window adds its feature vector to cell
    (floor((x-x_min)/cell), floor((y-y_min)/cell)). Accumulation runs in
    ascending (u, v, d) order, so output is bit-exact. An optional z window
    filters samples by height; default keeps everything.
    """
    lifted = np.asarray(lifted, dtype=np.float64)
    if lifted.ndim != 4:
        raise ValueError(f"lifted features must be (H,W,D,C), got {lifted.shape}")
    if lifted.shape[:3] != frustum.coords.shape[:3]:
        raise ValueError(
            f"lifted {lifted.shape[:3]} vs frustum {frustum.coords.shape[:3]} mismatch"
        )
    c = lifted.shape[3]
    # u-major flattening: iterate columns, then rows, then bins.
    coords = np.transpose(frustum.coords, (1, 0, 2, 3)).reshape(-1, 3)
    feats = np.transpose(lifted, (1, 0, 2, 3)).reshape(-1, c)

    ix = np.floor((coords[:, 0] - spec.x_min) / spec.cell_size).astype(np.int64)
    iy = np.floor((coords[:, 1] - spec.y_min) / spec.cell_size).astype(np.int64)
    inside = (ix >= 0) & (ix < spec.nx) & (iy >= 0) & (iy < spec.ny)
    if z_window is not None:
        z_lo, z_hi = z_window
        inside &= (coords[:, 2] >= z_lo) & (coords[:, 2] < z_hi)

    out = np.zeros((spec.nx, spec.ny, c))
    np.add.at(out, (ix[inside], iy[inside]), feats[inside])
    return BevGrid(spec.with_channels(c), out)


def camera_bev(
    cams: list[CameraModel],
    features: list[FeatureImage],
    depths: list[DepthGrid],
    bin_spec: DepthBinSpec,
    bev_spec: BevGridSpec,
    z_window: tuple[float, float] | None = None,
) -> BevGrid:
    """Sum of per-camera splats, folded in camera order."""
    if not (len(cams) == len(features) == len(depths)):
        raise ValueError(
            f"list length mismatch: {len(cams)} cameras, "
            f"{len(features)} features, {len(depths)} depths"
        )
    if not cams:
        raise ValueError("need at least one camera")
    c = features[0].shape[2]
    spec = bev_spec.with_channels(c)
    total = np.zeros((spec.nx, spec.ny, c))
    for i, (cam, feat, dep) in enumerate(zip(cams, features, depths)):
        fr = build_frustum(cam, feat.stride, bin_spec, camera_index=i)
        total += splat(lift(feat, dep), fr, spec, z_window=z_window).data
    return BevGrid(spec, total)
