"""Built-in smoke battery: quick oracle checks over every subsystem.

These are reduced-size versions of the test-suite oracles, meant to
verify an installation in a few seconds. The full-rigor suites live in
the pytest tree.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .augment import FadeSchedule, build_database, paste, paste_enabled
from .boxes import Box3D, DetectionSet, bev_corners, bev_iou, nms, transform_box, untransform_box
from .config import PipelineConfig
from .depth import DepthBinSpec, DepthGrid, MaskMap, rasterize_lidar_depth, rectify_depth
from .ensemble import TtaConfig, WbfConfig, tta_collapse, tta_expand, wbf
from .geometry import PointCloud, RigidTransform, compose, invert, rot_z
from .lidar_bev import VoxelSpec, voxelize
from .lift_splat import BevGridSpec, Frustum, splat
from .metrics import EvalConfig, average_precision, evaluate, nds
from .synth import synth_scene


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ""


def _check_rigid_round_trip() -> CheckResult:
    rng = np.random.default_rng(7)
    t = RigidTransform(rot_z(rng.uniform(-3, 3)), rng.normal(0, 5, 3))
    err = np.abs(compose(t, invert(t)).rotation - np.eye(3)).max()
    err = max(err, np.abs(compose(t, invert(t)).translation).max())
    return CheckResult("rigid_transform_round_trip", err < 1e-9, f"max error {err:.2e}")


def _check_rectify_formula() -> CheckResult:
    rng = np.random.default_rng(11)
    h = w = 8
    d = 12
    cam = rng.uniform(0, 1, (h, w, d))
    cam /= cam.sum(axis=2, keepdims=True)
    lid = np.zeros((h, w, d))
    lid[np.arange(h)[:, None], np.arange(w)[None, :], rng.integers(0, d, (h, w))] = 1.0
    m = rng.integers(0, 2, (h, w)).astype(np.uint8)
    got = rectify_depth(DepthGrid(cam), DepthGrid(lid), MaskMap(m)).values
    want = lid * m[:, :, None] + cam * (1.0 - m[:, :, None])
    ok = np.array_equal(got, want)
    return CheckResult("depth_rectification_formula", ok, "exact elementwise match")


def _check_splat_oracle() -> CheckResult:
    rng = np.random.default_rng(13)
    h, w, d, c = 4, 4, 3, 2
    spec = BevGridSpec(-3.0, 3.0, -3.0, 3.0, 1.0, channels=c)
    coords = rng.uniform(-4, 4, (h, w, d, 3))
    lifted = rng.normal(0, 1, (h, w, d, c))
    got = splat(lifted, Frustum(coords), spec).data
    want = np.zeros_like(got)
    for u in range(w):
        for v in range(h):
            for k in range(d):
                x, y, _ = coords[v, u, k]
                ix = int(np.floor((x - spec.x_min) / spec.cell_size))
                iy = int(np.floor((y - spec.y_min) / spec.cell_size))
                if 0 <= ix < spec.nx and 0 <= iy < spec.ny:
                    want[ix, iy] += lifted[v, u, k]
    ok = np.array_equal(got, want)
    return CheckResult("splat_scatter_oracle", ok, "bit-exact vs triple loop")


def _check_voxel_index() -> CheckResult:
    spec = VoxelSpec()
    cloud = PointCloud(np.array([[0.0375, 0.0, -4.0, 0.5]]))
    grid = voxelize(cloud, spec)
    ok = len(grid) == 1 and tuple(grid.indices[0][:2]) == (720, 720)
    return CheckResult("voxel_index_arithmetic", ok, f"indices {grid.indices.tolist()}")


def _check_bev_iou() -> CheckResult:
    a = Box3D((0, 0, 0), (1, 1, 1), 0.0)
    b = Box3D((0.5, 0, 0), (1, 1, 1), 0.0)
    hand_ok = abs(bev_iou(a, b) - 1.0 / 3.0) < 1e-9
    rng = np.random.default_rng(17)
    worst = 0.0
    for _ in range(20):
        b1 = Box3D(tuple(rng.uniform(-2, 2, 3)), tuple(rng.uniform(0.5, 3, 3)), rng.uniform(-np.pi, np.pi))
        b2 = Box3D(tuple(rng.uniform(-2, 2, 3)), tuple(rng.uniform(0.5, 3, 3)), rng.uniform(-np.pi, np.pi))
        pts_lo = np.minimum(bev_corners(b1).min(0), bev_corners(b2).min(0))
        pts_hi = np.maximum(bev_corners(b1).max(0), bev_corners(b2).max(0))
        samples = rng.uniform(pts_lo, pts_hi, (100_000, 2))
        in1 = _inside(b1, samples)
        in2 = _inside(b2, samples)
        either = np.count_nonzero(in1 | in2)
        mc = np.count_nonzero(in1 & in2) / either if either else 0.0
        worst = max(worst, abs(mc - bev_iou(b1, b2)))
    return CheckResult("bev_iou_oracles", hand_ok and worst < 0.02, f"worst MC gap {worst:.4f}")


def _inside(box: Box3D, pts: np.ndarray) -> np.ndarray:
    rel = pts - np.array(box.center[:2])
    c, s = np.cos(box.yaw), np.sin(box.yaw)
    lx = c * rel[:, 0] + s * rel[:, 1]
    ly = -s * rel[:, 0] + c * rel[:, 1]
    return (np.abs(lx) <= box.size[0] / 2) & (np.abs(ly) <= box.size[1] / 2)


def _check_nms() -> CheckResult:
    rng = np.random.default_rng(19)
    for _ in range(10):
        boxes = [
            Box3D(
                (rng.uniform(-5, 5), rng.uniform(-5, 5), 0.0),
                (2.0, 2.0, 1.0),
                0.0,
                score=float(rng.uniform(0, 1)),
            )
            for _ in range(8)
        ]
        got = nms(DetectionSet("s", boxes), 0.3).boxes
        kept = []
        for i in sorted(range(len(boxes)), key=lambda i: (-boxes[i].score, i)):
            if all(bev_iou(boxes[i], boxes[k]) <= 0.3 for k in kept):
                kept.append(i)
        if got != [boxes[k] for k in kept]:
            return CheckResult("nms_greedy_oracle", False, "mismatch vs oracle")
    return CheckResult("nms_greedy_oracle", True, "10/10 sets match")


def _check_wbf() -> CheckResult:
    b1 = Box3D((0, 0, 0), (4, 2, 1.5), 0.3, score=0.8)
    b2 = Box3D((1, 0, 0), (4, 2, 1.5), 0.3, score=0.4)
    fused = wbf(
        [DetectionSet("s", [b1]), DetectionSet("s", [b2])],
        WbfConfig(cluster_iou=0.2),
    )
    center_ok = len(fused.boxes) == 1 and abs(fused.boxes[0].center[0] - 1.0 / 3.0) < 1e-9
    one = wbf([DetectionSet("s", [b1, b2])], WbfConfig())
    identity_ok = one.boxes == [b1, b2]
    return CheckResult("wbf_weighted_mean", center_ok and identity_ok, "center 1/3 + identity")


def _check_tta_round_trip() -> CheckResult:
    box = Box3D((5, -2, -4), (4, 2, 1.5), 0.7, velocity=(1.0, -0.5), score=0.9)
    worst = 0.0
    for rot in (-np.pi / 6, 0.0, np.pi / 6):
        for scale in (0.9, 1.0, 1.1):
            for flip in (False, True):
                fwd = transform_box(box, rot, scale, flip)
                back = untransform_box(fwd, rot, scale, flip)
                worst = max(
                    worst,
                    max(abs(a - b) for a, b in zip(back.center, box.center)),
                    abs(back.yaw - box.yaw),
                )
    return CheckResult("tta_transform_round_trip", worst < 1e-9, f"max error {worst:.2e}")


def _check_tta_scene() -> CheckResult:
    cfg = PipelineConfig()
    scene = synth_scene(3, 2, 400, cfg)
    variants = tta_expand(scene, TtaConfig((0.0, np.pi / 8), (1.0, 1.05), False))
    sets = [DetectionSet(v.sample_id, v.boxes) for v, _ in variants]
    collapsed = tta_collapse(sets, [r for _, r in variants])
    if len(collapsed.boxes) != len(scene.boxes) * len(variants):
        return CheckResult("tta_expand_collapse", False, "pool count mismatch")
    worst = 0.0
    for i, b in enumerate(collapsed.boxes):
        ref = scene.boxes[i % len(scene.boxes)]
        worst = max(worst, max(abs(x - y) for x, y in zip(b.center, ref.center)))
    return CheckResult("tta_expand_collapse", worst < 1e-9, f"max center error {worst:.2e}")


def _check_metrics() -> CheckResult:
    gt_sets = []
    for seed in range(3):
        scene = synth_scene(seed, 3, 300)
        gt_sets.append(DetectionSet(scene.sample_id, scene.boxes))
    result = evaluate(gt_sets, gt_sets, EvalConfig())
    perfect = result.mean_ap == 1.0 and result.nds == 1.0
    formula = (
        nds(1.0, dict.fromkeys(("ate", "ase", "aoe", "ave", "aae"), 0.0)) == 1.0
        and nds(0.5, dict.fromkeys(("ate", "ase", "aoe", "ave", "aae"), 2.0)) == 0.25
        and nds(0.0, dict.fromkeys(("ate", "ase", "aoe", "ave", "aae"), 0.0)) == 0.5
    )
    ap = average_precision([(0.9, True)], 2)
    hand = abs(ap - 4.0 / 9.0) < 1e-12
    return CheckResult("metrics_scores", perfect and formula and hand, "gt-vs-gt = 1.0/1.0")


def _check_fade_and_paste() -> CheckResult:
    sched = FadeSchedule(20, 15)
    fade_ok = all(paste_enabled(e, sched) for e in range(15)) and not any(
        paste_enabled(e, sched) for e in range(15, 20)
    )
    donor = synth_scene(5, 4, 600)
    target = synth_scene(6, 2, 400)
    db = build_database([(donor.cloud, donor.boxes)])
    quota = {cls: 2 for cls in db.entries}
    r1 = paste(target.cloud, target.boxes, db, quota, rng_seed=42)
    r2 = paste(target.cloud, target.boxes, db, quota, rng_seed=42)
    det_ok = np.array_equal(r1.cloud.points, r2.cloud.points) and r1.boxes == r2.boxes
    disjoint = all(
        bev_iou(p, o) == 0.0 for p in r1.pasted for o in r1.boxes if o is not p
    )
    return CheckResult("fade_and_paste", fade_ok and det_ok and disjoint, "schedule + determinism")


def _check_raster_min_depth() -> CheckResult:
    cfg = PipelineConfig()
    scene = synth_scene(9, 0, 500, cfg)
    spec = DepthBinSpec()
    grid, mask = rasterize_lidar_depth(scene.cameras[0], scene.cloud, cfg.feature_stride, spec)
    sums = grid.values.sum(axis=2)
    ok = np.array_equal(sums != 0, mask.mask.astype(bool)) and set(np.unique(sums)) <= {0.0, 1.0}
    return CheckResult("raster_onehot_mask", ok, "one-hot exactly where masked")


def run_selftest() -> list[CheckResult]:
    checks = [
        _check_rigid_round_trip,
        _check_rectify_formula,
        _check_splat_oracle,
        _check_voxel_index,
        _check_raster_min_depth,
        _check_bev_iou,
        _check_nms,
        _check_wbf,
        _check_tta_round_trip,
        _check_tta_scene,
        _check_metrics,
        _check_fade_and_paste,
    ]
    results = []
    for fn in checks:
        try:
            results.append(fn())
        except Exception as e:  # a crashed check is a failed check
            results.append(CheckResult(fn.__name__.lstrip("_"), False, f"raised {e!r}"))
    return results
