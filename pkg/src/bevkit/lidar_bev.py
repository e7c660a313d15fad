"""LiDAR branch: voxelization, multi-scale sparse pyramid, z compression
into BEV maps, and multi-scale BEV fusion.

Voxel features are hand-crafted (mean offsets, intensity, capped count)
so the whole branch is deterministic; stride-2 downsampling uses
channelwise max, and scale fusion uses nearest-neighbor resampling with
channel concatenation.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import ceil

import numpy as np

from .geometry import PointCloud
from .lift_splat import BevGrid, BevGridSpec

# Per-voxel feature layout: mean x/y/z offset from center, mean intensity,
# capped point count. Count saturates at this many points.
VOXEL_CHANNELS = 5
COUNT_CAP = 16


@dataclass(frozen=True)
class VoxelSpec:
    """Voxel sizes and metric ranges (x/y window shared with the BEV grid)."""

    vx: float = 0.075
    vy: float = 0.075
    vz: float = 0.2
    x_min: float = -54.0
    x_max: float = 54.0
    y_min: float = -54.0
    y_max: float = 54.0
    z_min: float = -5.0
    z_max: float = -3.0

    def __post_init__(self):
        for size, lo, hi, name in (
            (self.vx, self.x_min, self.x_max, "x"),
            (self.vy, self.y_min, self.y_max, "y"),
            (self.vz, self.z_min, self.z_max, "z"),
        ):
            if size <= 0:
                raise ValueError(f"voxel size along {name} must be positive")
            n = (hi - lo) / size
            if hi <= lo or abs(n - round(n)) > 1e-6:
                raise ValueError(f"{name} range must be a positive multiple of the voxel size")

    @property
    def dims(self) -> tuple[int, int, int]:
        return (
            int(round((self.x_max - self.x_min) / self.vx)),
            int(round((self.y_max - self.y_min) / self.vy)),
            int(round((self.z_max - self.z_min) / self.vz)),
        )


@dataclass
class SparseVoxelGrid:
    """Occupied voxels at a given stride: (M,3) integer indices + (M,C) features.

    Entries are kept sorted lexicographically by (ix, iy, iz) with no
    duplicate keys, so equal grids compare bit-identically.
    """

    spec: VoxelSpec
    stride: int
    indices: np.ndarray
    features: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64).reshape(-1, 3)
        feat = np.asarray(self.features, dtype=np.float64)
        if feat.ndim != 2 or feat.shape[0] != idx.shape[0]:
            raise ValueError("indices and features must have matching first dimension")
        if self.stride < 1 or self.stride & (self.stride - 1):
            raise ValueError("stride must be a power of two")
        dims = self.dims
        if idx.size:
            if idx.min() < 0 or np.any(idx >= np.array(dims)):
                raise ValueError(f"voxel index out of bounds for dims {dims}")
            keys = (idx[:, 0] * dims[1] + idx[:, 1]) * dims[2] + idx[:, 2]
            if len(np.unique(keys)) != len(keys):
                raise ValueError("duplicate voxel keys")
        self.indices = idx
        self.features = feat

    @property
    def dims(self) -> tuple[int, int, int]:
        nx, ny, nz = self.spec.dims
        s = self.stride
        return (ceil(nx / s), ceil(ny / s), ceil(nz / s))

    @property
    def channels(self) -> int:
        return self.features.shape[1]

    def __len__(self) -> int:
        return self.indices.shape[0]

    def as_dict(self) -> dict[tuple[int, int, int], np.ndarray]:
        return {tuple(k): v for k, v in zip(map(tuple, self.indices), self.features)}


def _sort_entries(indices: np.ndarray, features: np.ndarray):
    if indices.shape[0] == 0:
        return indices, features
    order = np.lexsort((indices[:, 2], indices[:, 1], indices[:, 0]))
    return indices[order], features[order]


def voxelize(pts: PointCloud, spec: VoxelSpec) -> SparseVoxelGrid:
    """Bin points into stride-1 voxels with aggregate features.

    Points outside the range are discarded. Per occupied voxel the feature
    is (mean offset from voxel center in x/y/z, mean intensity,
    min(n, 16)/16). Contributors are reduced in a canonical value order,
    so shuffled inputs produce an identical grid.
    """
    dims = spec.dims
    if len(pts) == 0:
        return SparseVoxelGrid(spec, 1, np.zeros((0, 3), np.int64), np.zeros((0, VOXEL_CHANNELS)))

    p = pts.points
    mins = np.array([spec.x_min, spec.y_min, spec.z_min])
    sizes = np.array([spec.vx, spec.vy, spec.vz])
    keep = np.all((p[:, :3] >= mins) & (p[:, :3] < mins + sizes * np.array(dims)), axis=1)
    p = p[keep]
    if p.shape[0] == 0:
        return SparseVoxelGrid(spec, 1, np.zeros((0, 3), np.int64), np.zeros((0, VOXEL_CHANNELS)))

    idx = np.floor((p[:, :3] - mins) / sizes).astype(np.int64)
    idx = np.minimum(idx, np.array(dims) - 1)  # guard points at the open boundary edge

    # Canonical order: voxel key first, then point values, so reductions are
    # independent of input order.
    order = np.lexsort((p[:, 3], p[:, 2], p[:, 1], p[:, 0], idx[:, 2], idx[:, 1], idx[:, 0]))
    idx, p = idx[order], p[order]

    key = (idx[:, 0] * dims[1] + idx[:, 1]) * dims[2] + idx[:, 2]
    starts = np.ones(len(key), dtype=bool)
    starts[1:] = key[1:] != key[:-1]
    start_pos = np.nonzero(starts)[0]
    counts = np.diff(np.append(start_pos, len(key)))

    sums = np.add.reduceat(p, start_pos, axis=0)
    means = sums / counts[:, None]
    vox_idx = idx[start_pos]
    centers = mins + (vox_idx + 0.5) * sizes
    feats = np.empty((len(start_pos), VOXEL_CHANNELS))
    feats[:, :3] = means[:, :3] - centers
    feats[:, 3] = means[:, 3]
    feats[:, 4] = np.minimum(counts, COUNT_CAP) / COUNT_CAP
    return SparseVoxelGrid(spec, 1, vox_idx, feats)


def downsample(grid: SparseVoxelGrid, factor: int = 2) -> SparseVoxelGrid:
    """Halve resolution: children grouped by index//2, channelwise max feature."""
    if factor != 2:
        raise ValueError("only factor-2 downsampling is supported")
    if len(grid) == 0:
        return SparseVoxelGrid(grid.spec, grid.stride * 2, grid.indices, grid.features)
    parent = grid.indices // 2
    parent, feats = _sort_entries(parent, grid.features)
    dims = grid.dims
    key = (parent[:, 0] * dims[1] + parent[:, 1]) * dims[2] + parent[:, 2]
    starts = np.ones(len(key), dtype=bool)
    starts[1:] = key[1:] != key[:-1]
    start_pos = np.nonzero(starts)[0]
    merged = np.maximum.reduceat(feats, start_pos, axis=0)
    return SparseVoxelGrid(grid.spec, grid.stride * 2, parent[start_pos], merged)


def build_pyramid(grid: SparseVoxelGrid, strides: tuple[int, ...] = (1, 2, 4, 8)) -> list[SparseVoxelGrid]:
    """Repeatedly downsample to produce grids at the requested strides."""
    if tuple(strides) != tuple(sorted(strides)):
        raise ValueError("strides must be ascending")
    out = []
    cur = grid
    for s in strides:
        if s < cur.stride:
            raise ValueError(f"cannot reach stride {s} from stride {cur.stride}")
        while cur.stride < s:
            cur = downsample(cur)
        out.append(cur)
    return out


def compress_z(grid: SparseVoxelGrid) -> BevGrid:
    """Flatten a voxel grid into BEV by concatenating features along z.

    Cell (ix, iy) holds the z-slot features back to back: channels
    [iz*C, (iz+1)*C) come from voxel (ix, iy, iz), zero where unoccupied.
    """
    if abs(grid.spec.vx - grid.spec.vy) > 1e-12:
        raise ValueError("z compression requires square ground-plane voxels")
    nx, ny, nz = grid.dims
    c = grid.channels
    cell = grid.spec.vx * grid.stride
    spec = BevGridSpec(
        x_min=grid.spec.x_min,
        x_max=grid.spec.x_min + nx * cell,
        y_min=grid.spec.y_min,
        y_max=grid.spec.y_min + ny * cell,
        cell_size=cell,
        channels=c * nz,
    )
    flat = np.zeros((nx * ny * nz, c))
    if len(grid):
        lin = (grid.indices[:, 0] * ny + grid.indices[:, 1]) * nz + grid.indices[:, 2]
        flat[lin] = grid.features
    return BevGrid(spec, flat.reshape(nx, ny, nz * c))


def fuse_multiscale(
    pyramid: list[BevGrid], strides: list[int], target_stride: int
) -> BevGrid:
    """Nearest-neighbor resample every map to the target stride and concat.

    Maps must share window origin and base cell (cell_size/stride). Output
    cell (i, j) takes the value of a stride-s map at (i*target//s, j*target//s);
    channels concatenate in stride order.
    """
    if not pyramid:
        raise ValueError("empty pyramid")
    if len(pyramid) != len(strides):
        raise ValueError("pyramid and strides must be parallel")
    if list(strides) != sorted(strides):
        raise ValueError("strides must be ascending")
    base_cell = pyramid[0].spec.cell_size / strides[0]
    for g, s in zip(pyramid, strides):
        if abs(g.spec.cell_size / s - base_cell) > 1e-9:
            raise ValueError("inconsistent base cell across pyramid")
        if abs(g.spec.x_min - pyramid[0].spec.x_min) > 1e-9 or abs(
            g.spec.y_min - pyramid[0].spec.y_min
        ) > 1e-9:
            raise ValueError("inconsistent window origin across pyramid")

    nx = ceil(pyramid[0].spec.nx * strides[0] / target_stride)
    ny = ceil(pyramid[0].spec.ny * strides[0] / target_stride)
    cell = base_cell * target_stride
    total_c = sum(g.spec.channels for g in pyramid)
    spec = BevGridSpec(
        x_min=pyramid[0].spec.x_min,
        x_max=pyramid[0].spec.x_min + nx * cell,
        y_min=pyramid[0].spec.y_min,
        y_max=pyramid[0].spec.y_min + ny * cell,
        cell_size=cell,
        channels=total_c,
    )
    out = np.zeros((nx, ny, total_c))
    off = 0
    for g, s in zip(pyramid, strides):
        src_x = np.minimum(np.arange(nx) * target_stride // s, g.spec.nx - 1)
        src_y = np.minimum(np.arange(ny) * target_stride // s, g.spec.ny - 1)
        out[:, :, off : off + g.spec.channels] = g.data[np.ix_(src_x, src_y)]
        off += g.spec.channels
    return BevGrid(spec, out)


def concat_bev(cam: BevGrid, lid: BevGrid) -> BevGrid:
    """Channel-concatenate camera and LiDAR BEV maps (camera channels first)."""
    if (cam.spec.nx, cam.spec.ny) != (lid.spec.nx, lid.spec.ny) or not cam.spec.same_window(
        lid.spec
    ):
        raise ValueError(
            f"spatial mismatch: {cam.spec.nx}x{cam.spec.ny} window vs {lid.spec.nx}x{lid.spec.ny}"
        )
    spec = cam.spec.with_channels(cam.spec.channels + lid.spec.channels)
    return BevGrid(spec, np.concatenate([cam.data, lid.data], axis=2))
