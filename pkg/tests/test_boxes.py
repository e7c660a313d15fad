import numpy as np
import pytest

from bevkit.boxes import (
    Box3D,
    DetectionSet,
    bev_corners,
    bev_iou,
    iou3d,
    nms,
    normalize_yaw,
    points_in_box,
    transform_box,
    untransform_box,
)
from helpers import make_box, monte_carlo_bev_iou, random_box


def greedy_nms_oracle(boxes, threshold, per_class=True):
    """Independent exhaustive greedy pass over score-sorted indices."""
    order = sorted(range(len(boxes)), key=lambda i: (-boxes[i].score, i))
    kept = []
    for i in order:
        ok = True
        for k in kept:
            if per_class and boxes[k].class_name != boxes[i].class_name:
                continue
            if bev_iou(boxes[i], boxes[k]) > threshold:
                ok = False
                break
        if ok:
            kept.append(i)
    return [boxes[k] for k in kept]


def test_box_validation_and_normalization():
    b = Box3D((0, 0, 0), (1, 1, 1), yaw=3 * np.pi)
    assert abs(b.yaw - np.pi) < 1e-12
    assert -np.pi < b.yaw <= np.pi
    with pytest.raises(ValueError):
        Box3D((0, 0, 0), (0.0, 1, 1), 0.0)
    with pytest.raises(ValueError):
        Box3D((0, 0, 0), (1, 1, 1), 0.0, score=1.5)
    with pytest.raises(ValueError):
        Box3D((0, 0, 0), (1, 1, 1), 0.0, class_name="plane")


def test_normalize_yaw_edges():
    assert normalize_yaw(np.pi) == np.pi
    assert normalize_yaw(-np.pi) == np.pi
    assert normalize_yaw(0.0) == 0.0
    assert abs(normalize_yaw(2 * np.pi + 0.25) - 0.25) < 1e-12


def test_bev_corners_axis_aligned():
    got = {tuple(np.round(c, 9)) for c in bev_corners(make_box(l=2, w=2))}
    assert got == {(1.0, 1.0), (-1.0, 1.0), (-1.0, -1.0), (1.0, -1.0)}


def test_bev_corners_quarter_turn():
    # l=4, w=2 rotated 90 deg becomes the axis-aligned 2 x 4 rectangle
    got = {tuple(np.round(c, 9)) for c in bev_corners(make_box(l=4, w=2, yaw=np.pi / 2))}
    assert got == {(1.0, 2.0), (-1.0, 2.0), (-1.0, -2.0), (1.0, -2.0)}


def test_bev_corners_half_turn_symmetry():
    a = {tuple(np.round(c, 9)) for c in bev_corners(make_box(l=4, w=2, yaw=0.0))}
    b = {tuple(np.round(c, 9)) for c in bev_corners(make_box(l=4, w=2, yaw=np.pi))}
    assert a == b


def test_bev_corners_ccw():
    poly = bev_corners(make_box(l=3, w=1.5, yaw=0.7))
    x, y = poly[:, 0], poly[:, 1]
    area2 = np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)
    assert area2 > 0


def test_bev_iou_identical():
    b = make_box(l=3.3, w=1.7, yaw=0.4)
    assert bev_iou(b, b) == 1.0


def test_bev_iou_hand_half_overlap():
    # unit squares offset by 0.5: inter 0.5, union 1.5
    a = make_box(l=1, w=1)
    b = make_box(x=0.5, l=1, w=1)
    assert abs(bev_iou(a, b) - 1.0 / 3.0) < 1e-9


def test_bev_iou_disjoint():
    assert bev_iou(make_box(), make_box(x=100.0)) == 0.0


def test_bev_iou_symmetric_and_bounded():
    rng = np.random.default_rng(40)
    for _ in range(50):
        a, b = random_box(rng), random_box(rng)
        iou = bev_iou(a, b)
        assert 0.0 <= iou <= 1.0
        assert iou == bev_iou(b, a)


def test_bev_iou_monte_carlo_oracle():
    rng = np.random.default_rng(41)
    for _ in range(25):
        a = random_box(rng, span=2.0)
        b = random_box(rng, span=2.0)
        mc = monte_carlo_bev_iou(a, b, rng, n_samples=200_000)
        assert abs(mc - bev_iou(a, b)) < 0.01


def test_iou3d_identical():
    b = make_box(l=3, w=2, h=1.5, yaw=0.3)
    assert iou3d(b, b) == 1.0


def test_iou3d_z_overlap_hand_case():
    # same footprint, z ranges [0,2] and [1,3]: inter = A*1, union = A*3
    a = make_box(z=1.0, l=2, w=2, h=2)
    b = make_box(z=2.0, l=2, w=2, h=2)
    assert abs(iou3d(a, b) - 1.0 / 3.0) < 1e-9


def test_iou3d_no_z_overlap():
    a = make_box(z=0.0, h=1.0)
    b = make_box(z=10.0, h=1.0)
    assert iou3d(a, b) == 0.0


def test_nms_identical_boxes():
    dets = DetectionSet("s", [make_box(score=0.9), make_box(score=0.8)])
    out = nms(dets, 0.5)
    assert len(out.boxes) == 1 and out.boxes[0].score == 0.9


def test_nms_disjoint_keeps_all():
    dets = DetectionSet("s", [make_box(x=10 * i, score=0.5) for i in range(5)])
    assert len(nms(dets, 0.5).boxes) == 5


def test_nms_matches_oracle_random():
    rng = np.random.default_rng(42)
    for _ in range(30):
        boxes = [random_box(rng, span=4.0, smin=1.0, smax=4.0) for _ in range(5)]
        got = nms(DetectionSet("s", boxes), 0.3, per_class=False).boxes
        assert got == greedy_nms_oracle(boxes, 0.3, per_class=False)
        got_pc = nms(DetectionSet("s", boxes), 0.3, per_class=True).boxes
        assert got_pc == greedy_nms_oracle(boxes, 0.3, per_class=True)


def test_nms_subset_and_idempotent():
    rng = np.random.default_rng(43)
    boxes = [random_box(rng, span=3.0) for _ in range(12)]
    once = nms(DetectionSet("s", boxes), 0.25)
    assert all(b in boxes for b in once.boxes)
    twice = nms(once, 0.25)
    assert twice.boxes == once.boxes


def test_nms_score_threshold():
    dets = DetectionSet("s", [make_box(score=0.9), make_box(x=50, score=0.1)])
    out = nms(dets, 0.5, score_threshold=0.2)
    assert len(out.boxes) == 1 and out.boxes[0].score == 0.9


def test_transform_box_identity():
    b = make_box(x=1.2, y=-3.0, z=0.5, yaw=0.7, vx=1.0, vy=2.0)
    assert transform_box(b, 0.0, 1.0, False) == b


def test_transform_box_quarter_turn():
    b = make_box(x=1.0, y=0.0, yaw=0.2)
    out = transform_box(b, np.pi / 2, 1.0, False)
    assert abs(out.center[0]) < 1e-12 and abs(out.center[1] - 1.0) < 1e-12
    assert abs(out.yaw - (0.2 + np.pi / 2)) < 1e-12


def test_transform_box_scale_homogeneous():
    b = make_box(x=2.0, y=-1.0, z=0.5, l=4, w=2, h=1.5, vx=3.0)
    out = transform_box(b, 0.0, 2.0, False)
    assert out.size == (8.0, 4.0, 3.0)
    assert out.center == (4.0, -2.0, 1.0)
    assert out.velocity == (6.0, 0.0)


def test_transform_box_flip():
    b = make_box(x=2.0, y=1.0, yaw=0.3, vx=1.5, vy=-0.5)
    out = transform_box(b, 0.0, 1.0, True)
    assert out.center[0] == -2.0 and out.center[1] == 1.0
    assert abs(out.yaw - (np.pi - 0.3)) < 1e-12
    assert out.velocity == (-1.5, -0.5)


def test_transform_round_trip_all_params():
    rng = np.random.default_rng(44)
    for _ in range(50):
        b = random_box(rng)
        rot = rng.uniform(-np.pi, np.pi)
        scale = rng.uniform(0.5, 2.0)
        flip = bool(rng.integers(0, 2))
        back = untransform_box(transform_box(b, rot, scale, flip), rot, scale, flip)
        assert np.abs(np.array(back.center) - b.center).max() < 1e-9
        assert np.abs(np.array(back.size) - b.size).max() < 1e-9
        assert np.abs(np.array(back.velocity) - b.velocity).max() < 1e-9
        assert abs(back.yaw - b.yaw) < 1e-9


def test_transform_box_respects_footprint():
    # transformed corners equal transformed original corners
    rng = np.random.default_rng(45)
    b = random_box(rng)
    rot, scale = 0.6, 1.3
    out = transform_box(b, rot, scale, False)
    c, s = np.cos(rot), np.sin(rot)
    rot_m = np.array([[c, -s], [s, c]])
    want = {tuple(np.round(scale * (rot_m @ p), 8)) for p in bev_corners(b)}
    got = {tuple(np.round(p, 8)) for p in bev_corners(out)}
    assert want == got


def test_points_in_box_closed_boundary():
    b = make_box(l=2, w=2, h=2)
    pts = np.array(
        [
            [1.0, 0.0, 0.0],  # exactly on the +x face
            [0.0, 1.0, 0.0],  # exactly on the +y face
            [0.0, 0.0, 1.0],  # exactly on the top face
            [1.0 + 1e-9, 0.0, 0.0],
        ]
    )
    inside = points_in_box(b, pts)
    assert inside.tolist() == [True, True, True, False]
