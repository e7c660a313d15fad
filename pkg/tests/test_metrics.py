import math

import numpy as np
import pytest

from bevkit.boxes import Box3D, DetectionSet
from bevkit.metrics import (
    EvalConfig,
    average_precision,
    center_distance,
    evaluate,
    format_report,
    match,
    nds,
    tp_errors,
)
from bevkit.synth import synth_scene
from helpers import make_box, random_box

ZERO_ERRORS = dict.fromkeys(("ate", "ase", "aoe", "ave", "aae"), 0.0)


def ap_oracle(decisions, n_gt, min_recall=0.1, min_precision=0.1):
    """Brute-force PR oracle: walk the score-sorted decisions, record the
    final precision at each distinct recall, linearly interpolate onto the
    101-point grid with a manual scan, and average the clipped values."""
    if n_gt == 0 or not decisions:
        return 0.0
    ordered = sorted(decisions, key=lambda d: (-d[0], not d[1]))
    by_recall = {}
    tp = fp = 0
    for _, hit in ordered:
        tp, fp = tp + (1 if hit else 0), fp + (0 if hit else 1)
        by_recall[tp / n_gt] = tp / (tp + fp)  # overwrite: last precision wins
    recs = sorted(by_recall)
    precs = [by_recall[r] for r in recs]
    grid_vals = []
    for i in range(101):
        r = i / 100.0
        if r <= recs[0]:
            grid_vals.append(precs[0])
        elif r > recs[-1]:
            grid_vals.append(0.0)
        else:
            j = 0
            while recs[j] < r:
                j += 1
            if recs[j] == r:
                grid_vals.append(precs[j])
            else:
                lo = j - 1
                t = (r - recs[lo]) / (recs[j] - recs[lo])
                grid_vals.append(precs[lo] + t * (precs[j] - precs[lo]))
    first = round(100 * min_recall) + 1
    kept = [max(p - min_precision, 0.0) for p in grid_vals[first:]]
    return min(1.0, max(0.0, sum(kept) / (len(kept) * (1.0 - min_precision))))


def test_match_hand_distance():
    gt = DetectionSet("s", [make_box(x=0.0)])
    pred = DetectionSet("s", [make_box(x=0.3, score=0.9)])
    out = match(pred, gt, threshold=0.5, class_name="car")
    assert out[0][1] is not None
    out2 = match(pred, gt, threshold=0.25, class_name="car")
    assert out2[0][1] is None


def test_match_empty_predictions():
    gt = DetectionSet("s", [make_box(), make_box(x=5.0)])
    assert match(DetectionSet("s", []), gt, 2.0, "car") == []


def test_match_greedy_takes_nearest():
    gt = DetectionSet("s", [make_box(x=0.0), make_box(x=1.0)])
    preds = DetectionSet(
        "s", [make_box(x=0.1, score=0.9), make_box(x=0.2, score=0.8)]
    )
    out = match(preds, gt, 2.0, "car")
    assert out[0][1].center[0] == 0.0  # best pred grabs the nearest gt
    assert out[1][1].center[0] == 1.0  # second falls back to the remaining one


def test_match_respects_class():
    gt = DetectionSet("s", [make_box(cls="truck")])
    pred = DetectionSet("s", [make_box(score=0.9, cls="car")])
    assert match(pred, gt, 4.0, "car") == [(pred.boxes[0], None)]


def test_ap_perfect_detector():
    decisions = [(0.9, True), (0.8, True), (0.7, True)]
    assert average_precision(decisions, 3) == 1.0


def test_ap_no_predictions():
    assert average_precision([], 5) == 0.0
    assert average_precision([(0.9, True)], 0) == 0.0


def test_ap_half_recall_hand_value():
    # 2 gts, one correct pred: precision 1 up to recall 0.5, then 0.
    # On the 101-point grid, points 0.11..0.50 keep (1 - 0.1); 40 of 90 points:
    # AP = 40*(0.9) / (90*0.9) = 4/9.
    ap = average_precision([(0.9, True)], 2)
    assert abs(ap - 4.0 / 9.0) < 1e-12
    assert abs(ap_oracle([(0.9, True)], 2) - 4.0 / 9.0) < 1e-12


def test_ap_matches_brute_force_oracle():
    rng = np.random.default_rng(60)
    for _ in range(50):
        n_gt = int(rng.integers(1, 20))
        n_pred = int(rng.integers(0, 20))
        hits = 0
        decisions = []
        for _ in range(n_pred):
            is_tp = hits < n_gt and rng.uniform() < 0.6
            hits += 1 if is_tp else 0
            decisions.append((float(rng.uniform()), is_tp))
        assert abs(average_precision(decisions, n_gt) - ap_oracle(decisions, n_gt)) < 1e-9


def test_ap_low_scored_fp_never_increases():
    rng = np.random.default_rng(61)
    for _ in range(20):
        decisions = [(float(rng.uniform(0.5, 1.0)), bool(rng.integers(0, 2))) for _ in range(8)]
        base = average_precision(decisions, 6)
        worse = average_precision(decisions + [(0.1, False)], 6)
        assert worse <= base + 1e-12


def test_tp_errors_perfect():
    pairs = [(make_box(), make_box()), (make_box(x=3.0), make_box(x=3.0))]
    errs = tp_errors(pairs, "car")
    assert all(v == 0.0 for v in errs.values())


def test_tp_errors_yaw_quarter_turn():
    pairs = [(make_box(yaw=np.pi / 2), make_box(yaw=0.0))]
    assert abs(tp_errors(pairs, "car")["aoe"] - np.pi / 2) < 1e-12


def test_tp_errors_barrier_half_turn_period():
    pairs = [(make_box(yaw=np.pi, cls="barrier"), make_box(yaw=0.0, cls="barrier"))]
    assert tp_errors(pairs, "barrier")["aoe"] < 1e-12


def test_tp_errors_half_size_scale():
    # aligned volume ratio (0.5)^3: ASE = 1 - 0.125 = 0.875
    pred = make_box(l=2.0, w=1.0, h=0.8)
    gt = make_box(l=4.0, w=2.0, h=1.6)
    assert abs(tp_errors([(pred, gt)], "car")["ase"] - 0.875) < 1e-12


def test_tp_errors_velocity():
    pred = make_box(vx=3.0, vy=4.0)
    gt = make_box()
    assert abs(tp_errors([(pred, gt)], "car")["ave"] - 5.0) < 1e-12


def test_tp_errors_empty_is_worst():
    assert tp_errors([], "car") == dict.fromkeys(("ate", "ase", "aoe", "ave", "aae"), 1.0)


def test_nds_formula_cases():
    assert nds(1.0, ZERO_ERRORS) == 1.0
    assert nds(0.5, dict.fromkeys(ZERO_ERRORS, 2.0)) == 0.25
    assert nds(0.0, ZERO_ERRORS) == 0.5


def test_nds_recomputable_from_result():
    scene = synth_scene(8, 5, 500)
    gt = [DetectionSet(scene.sample_id, scene.boxes)]
    result = evaluate(gt, gt)
    assert result.nds == nds(result.mean_ap, result.mean_errors)


def test_evaluate_gt_against_itself():
    gt_sets = []
    for seed in range(5):
        scene = synth_scene(seed, 4, 400)
        gt_sets.append(DetectionSet(scene.sample_id, scene.boxes))
    result = evaluate(gt_sets, gt_sets)
    assert result.mean_ap == 1.0
    assert result.nds == 1.0
    assert all(v == 0.0 for errs in result.per_class_errors.values() for v in errs.values())


def test_evaluate_excludes_absent_classes():
    gt = [DetectionSet("s", [make_box(cls="car")])]
    result = evaluate(gt, gt)
    assert set(result.per_class_ap) == {"car"}
    assert result.mean_ap == 1.0


def test_evaluate_permutation_invariant():
    rng = np.random.default_rng(62)
    gts, preds = [], []
    for i in range(4):
        boxes = [random_box(rng, span=20.0, cls="car", score=1.0) for _ in range(5)]
        noisy = [
            Box3D(
                center=(b.center[0] + rng.normal(0, 1.0), b.center[1] + rng.normal(0, 1.0), b.center[2]),
                size=b.size,
                yaw=b.yaw,
                velocity=b.velocity,
                class_name="car",
                score=float(rng.uniform(0.2, 1.0)),
            )
            for b in boxes
        ]
        gts.append(DetectionSet(f"s{i}", boxes))
        preds.append(DetectionSet(f"s{i}", noisy))
    base = evaluate(preds, gts)
    order = rng.permutation(4)
    shuffled_preds = [
        DetectionSet(preds[i].sample_id, [preds[i].boxes[j] for j in rng.permutation(5)])
        for i in order
    ]
    shuffled_gts = [gts[i] for i in order]
    again = evaluate(shuffled_preds, shuffled_gts)
    assert again.mean_ap == base.mean_ap
    assert again.nds == base.nds


def test_evaluate_validates_inputs():
    gt = [DetectionSet("a", [make_box()])]
    with pytest.raises(ValueError):
        evaluate([DetectionSet("b", [])], gt)
    with pytest.raises(ValueError):
        evaluate(gt + gt, gt + gt)  # duplicate ids


def test_center_distance_ignores_z():
    a = make_box(z=0.0)
    b = make_box(z=100.0)
    assert center_distance(a, b) == 0.0


def test_report_contains_summary():
    scene = synth_scene(9, 3, 300)
    gt = [DetectionSet(scene.sample_id, scene.boxes)]
    result = evaluate(gt, gt)
    text = format_report(result)
    assert "mAP: 1.0000" in text
    assert "NDS: 1.0000" in text
    for cls in result.per_class_ap:
        assert cls in text
