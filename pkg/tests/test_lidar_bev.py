import numpy as np
import pytest

from bevkit.geometry import PointCloud
from bevkit.lidar_bev import (
    SparseVoxelGrid,
    VoxelSpec,
    build_pyramid,
    compress_z,
    concat_bev,
    downsample,
    fuse_multiscale,
    voxelize,
)
from bevkit.lift_splat import BevGrid, BevGridSpec

SMALL = VoxelSpec(vx=0.5, vy=0.5, vz=0.5, x_min=-4, x_max=4, y_min=-4, y_max=4, z_min=-2, z_max=2)


def test_default_spec_dims():
    assert VoxelSpec().dims == (1440, 1440, 10)


def test_voxelize_empty():
    grid = voxelize(PointCloud.empty(), SMALL)
    assert len(grid) == 0 and grid.stride == 1 and grid.channels == 5


def test_voxelize_hand_index_default_spec():
    # x = 0.0375 with vx = 0.075 and x_min = -54: floor(54.0375/0.075) = 720
    grid = voxelize(PointCloud(np.array([[0.0375, 0.0, -4.0, 0.5]])), VoxelSpec())
    assert len(grid) == 1
    assert tuple(grid.indices[0]) == (720, 720, 5)


def test_voxelize_hand_mean_features():
    # vz = 0.4 so both points share voxel [-5.0, -4.6), center z = -4.8
    spec = VoxelSpec(vx=0.4, vy=0.4, vz=0.4, x_min=-4, x_max=4, y_min=-4, y_max=4,
                     z_min=-5.0, z_max=-3.0)
    pts = np.array([[0.1, 0.1, -4.9, 0.2], [0.1, 0.1, -4.7, 0.8]])
    grid = voxelize(PointCloud(pts), spec)
    assert len(grid) == 1
    feat = grid.features[0]
    assert abs(feat[2]) < 1e-9  # mean z offset from the -4.8 center
    assert abs(feat[3] - 0.5) < 1e-12  # mean intensity
    assert feat[4] == 2.0 / 16.0


def test_voxelize_discards_out_of_range():
    pts = np.array(
        [
            [0.1, 0.1, 0.1, 0.5],
            [100.0, 0.0, 0.0, 0.5],
            [0.0, 0.0, 50.0, 0.5],
            [4.0, 0.0, 0.0, 0.5],  # x_max itself is outside the half-open range
        ]
    )
    grid = voxelize(PointCloud(pts), SMALL)
    assert len(grid) == 1


def test_voxelize_count_cap():
    pts = np.tile(np.array([[0.1, 0.1, 0.1, 1.0]]), (40, 1))
    grid = voxelize(PointCloud(pts), SMALL)
    assert grid.features[0, 4] == 1.0  # min(40, 16)/16


def test_voxelize_permutation_invariant():
    rng = np.random.default_rng(20)
    pts = np.column_stack(
        [rng.uniform(-4, 4, 500), rng.uniform(-4, 4, 500), rng.uniform(-2, 2, 500), rng.uniform(0, 1, 500)]
    )
    a = voxelize(PointCloud(pts), SMALL)
    b = voxelize(PointCloud(pts[rng.permutation(500)]), SMALL)
    assert np.array_equal(a.indices, b.indices)
    assert np.array_equal(a.features, b.features)


def test_downsample_single_voxel():
    grid = SparseVoxelGrid(SMALL, 1, np.array([[4, 6, 2]]), np.arange(5.0).reshape(1, 5))
    parent = downsample(grid)
    assert parent.stride == 2
    assert tuple(parent.indices[0]) == (2, 3, 1)
    assert np.array_equal(parent.features, grid.features)


def test_downsample_max_merge():
    feats = np.array([[1.0, 0.0, 0.0, 0.0, 0.0], [0.0, 2.0, 0.0, 0.0, 0.0]])
    grid = SparseVoxelGrid(SMALL, 1, np.array([[0, 0, 0], [1, 1, 1]]), feats)
    parent = downsample(grid)
    assert len(parent) == 1
    assert np.array_equal(parent.features[0], [1.0, 2.0, 0.0, 0.0, 0.0])


def test_downsample_matches_grouping_oracle():
    rng = np.random.default_rng(21)
    n = 20
    idx = rng.integers(0, 8, (n, 3))
    idx = np.unique(idx, axis=0)
    feats = rng.normal(0, 1, (len(idx), 5))
    grid = SparseVoxelGrid(SMALL, 1, idx, feats)
    parent = downsample(grid)
    groups = {}
    for i, f in zip(idx, feats):
        groups.setdefault(tuple(i // 2), []).append(f)
    want = {k: np.max(v, axis=0) for k, v in groups.items()}
    got = parent.as_dict()
    assert set(got) == set(want)
    for k in want:
        assert np.array_equal(got[k], want[k])
    # structural invariants
    assert len(parent) <= len(grid)
    children_parents = {tuple(i // 2) for i in idx}
    assert set(got) == children_parents


def test_pyramid_strides():
    rng = np.random.default_rng(22)
    pts = np.column_stack(
        [rng.uniform(-4, 4, 200), rng.uniform(-4, 4, 200), rng.uniform(-2, 2, 200), rng.uniform(0, 1, 200)]
    )
    pyramid = build_pyramid(voxelize(PointCloud(pts), SMALL), (1, 2, 4, 8))
    assert [g.stride for g in pyramid] == [1, 2, 4, 8]
    counts = [len(g) for g in pyramid]
    assert all(a >= b for a, b in zip(counts, counts[1:]))


def test_compress_z_empty():
    grid = voxelize(PointCloud.empty(), SMALL)
    bev = compress_z(grid)
    assert bev.data.shape == (16, 16, 5 * 8)
    assert not bev.data.any()


def test_compress_z_single_voxel_channel_layout():
    feats = np.array([[1.0, 2.0, 3.0, 4.0, 5.0]])
    grid = SparseVoxelGrid(SMALL, 1, np.array([[3, 7, 0]]), feats)
    bev = compress_z(grid)
    assert np.array_equal(bev.data[3, 7, 0:5], feats[0])
    assert np.count_nonzero(bev.data) == 5
    other = SparseVoxelGrid(SMALL, 1, np.array([[3, 7, 2]]), feats)
    bev2 = compress_z(other)
    assert np.array_equal(bev2.data[3, 7, 10:15], feats[0])


def test_compress_z_stride8_slot_count():
    # default z range [-5,-3] at vz=0.2 gives 10 slots; ceil(10/8) = 2 at stride 8
    grid = voxelize(PointCloud(np.array([[0.1, 0.1, -4.0, 0.5]])), VoxelSpec())
    for _ in range(3):
        grid = downsample(grid)
    assert grid.stride == 8
    bev = compress_z(grid)
    assert bev.data.shape == (180, 180, 5 * 2)
    assert bev.spec.cell_size == 0.075 * 8


def test_compress_z_mass_conservation_exact():
    # dyadic nonnegative features sum exactly in any order
    rng = np.random.default_rng(23)
    idx = np.unique(rng.integers(0, 8, (30, 3)), axis=0)
    feats = rng.integers(0, 100, (len(idx), 5)).astype(float) / 8.0
    grid = SparseVoxelGrid(SMALL, 1, idx, feats)
    bev = compress_z(grid)
    assert bev.data.sum() == feats.sum()


def test_compress_z_element_oracle():
    rng = np.random.default_rng(24)
    idx = np.unique(rng.integers(0, 6, (25, 3)), axis=0)
    feats = rng.normal(0, 1, (len(idx), 5))
    grid = SparseVoxelGrid(SMALL, 1, idx, feats)
    bev = compress_z(grid)
    lut = {tuple(i): f for i, f in zip(idx, feats)}
    for ix in range(6):
        for iy in range(6):
            for iz in range(8):
                want = lut.get((ix, iy, iz), np.zeros(5))
                assert np.array_equal(bev.data[ix, iy, iz * 5 : (iz + 1) * 5], want)


def _grid(nx, ny, c, cell, seed, x_min=0.0, y_min=0.0):
    rng = np.random.default_rng(seed)
    spec = BevGridSpec(x_min, x_min + nx * cell, y_min, y_min + ny * cell, cell, channels=c)
    return BevGrid(spec, rng.normal(0, 1, (nx, ny, c)))


def test_fuse_single_scale_identity():
    g = _grid(4, 4, 3, 1.0, seed=25)
    out = fuse_multiscale([g], [4], target_stride=4)
    assert np.array_equal(out.data, g.data)
    assert out.spec == g.spec


def test_fuse_nearest_neighbor_replication():
    g = _grid(2, 2, 1, 2.0, seed=26)
    out = fuse_multiscale([g], [2], target_stride=1)
    assert out.data.shape == (4, 4, 1)
    for i in range(4):
        for j in range(4):
            assert out.data[i, j, 0] == g.data[i // 2, j // 2, 0]


def test_fuse_concat_strides_4_8():
    a = _grid(4, 4, 1, 1.0, seed=27)  # stride 4, base cell 0.25
    b = _grid(2, 2, 2, 2.0, seed=28)  # stride 8
    out = fuse_multiscale([a, b], [4, 8], target_stride=4)
    assert out.data.shape == (4, 4, 3)
    for i in range(4):
        for j in range(4):
            assert out.data[i, j, 0] == a.data[i, j, 0]
            assert np.array_equal(out.data[i, j, 1:], b.data[i // 2, j // 2])


def test_fuse_cell_lookup_identity_random_pyramids():
    rng = np.random.default_rng(29)
    for _ in range(5):
        strides = [1, 2, 4]
        base = 0.5
        grids = [_grid(8 // s, 8 // s, int(rng.integers(1, 4)), base * s, seed=int(rng.integers(1e6))) for s in strides]
        out = fuse_multiscale(grids, strides, target_stride=1)
        off = 0
        for g, s in zip(grids, strides):
            c = g.spec.channels
            for i in range(8):
                for j in range(8):
                    assert np.array_equal(out.data[i, j, off : off + c], g.data[i // s, j // s])
            off += c


def test_fuse_validates_windows():
    a = _grid(4, 4, 1, 1.0, seed=30)
    b = _grid(4, 4, 1, 1.0, seed=31, x_min=2.0)
    with pytest.raises(ValueError):
        fuse_multiscale([a, b], [2, 2], target_stride=2)


def test_concat_bev_zero_camera():
    cam = _grid(4, 4, 2, 1.0, seed=32)
    cam.data[:] = 0.0
    lid = _grid(4, 4, 3, 1.0, seed=33)
    out = concat_bev(cam, lid)
    assert out.spec.channels == 5
    assert not out.data[:, :, :2].any()
    assert np.array_equal(out.data[:, :, 2:], lid.data)


def test_concat_bev_1x1_values():
    spec = BevGridSpec(0.0, 1.0, 0.0, 1.0, 1.0, channels=2)
    cam = BevGrid(spec, np.array([[[1.0, 2.0]]]))
    lid = BevGrid(spec.with_channels(1), np.array([[[3.0]]]))
    assert np.array_equal(concat_bev(cam, lid).data[0, 0], [1.0, 2.0, 3.0])


def test_concat_bev_elementwise_oracle():
    cam = _grid(6, 6, 2, 1.0, seed=34)
    lid = _grid(6, 6, 4, 1.0, seed=35)
    out = concat_bev(cam, lid)
    for i in range(6):
        for j in range(6):
            assert np.array_equal(out.data[i, j], np.concatenate([cam.data[i, j], lid.data[i, j]]))


def test_concat_bev_spatial_mismatch():
    cam = _grid(4, 4, 2, 1.0, seed=36)
    lid = _grid(8, 8, 2, 0.5, seed=37)
    with pytest.raises(ValueError):
        concat_bev(cam, lid)
