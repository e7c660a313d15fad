"""Detection evaluation: center-distance matching, per-class average
precision, true-positive error metrics, mAP and the composite detection
score.

Matching is greedy by descending confidence against the nearest unmatched
ground truth of the same class within a BEV center-distance threshold.
AP is the normalized area of the 101-point interpolated precision-recall
curve with the recall and precision floors removed; the composite score is
(5 * mAP + sum over the five error terms of (1 - min(1, err))) / 10.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .boxes import CLASS_NAMES, Box3D, DetectionSet

_N_RECALL_POINTS = 101


@dataclass(frozen=True)
class EvalConfig:
    dist_thresholds: tuple[float, ...] = (0.5, 1.0, 2.0, 4.0)
    recall_range: tuple[float, float] = (0.1, 1.0)
    min_precision: float = 0.1
    tp_threshold: float = 2.0
    class_list: tuple[str, ...] = CLASS_NAMES
    include_attribute_error: bool = False

    def __post_init__(self):
        ths = self.dist_thresholds
        if any(t <= 0 for t in ths) or list(ths) != sorted(ths):
            raise ValueError("distance thresholds must be positive and ascending")
        if not (0.0 <= self.recall_range[0] < self.recall_range[1] <= 1.0):
            raise ValueError("invalid recall range")


TP_METRICS = ("ate", "ase", "aoe", "ave", "aae")


@dataclass
class EvalResult:
    per_class_ap: dict[str, dict[float, float]]
    per_class_ap_mean: dict[str, float]
    mean_ap: float
    per_class_errors: dict[str, dict[str, float]]
    mean_errors: dict[str, float]
    nds: float
    n_gt: dict[str, int] = field(default_factory=dict)


def center_distance(a: Box3D, b: Box3D) -> float:
    """BEV (x, y) center distance in meters; z is ignored."""
    return math.hypot(a.center[0] - b.center[0], a.center[1] - b.center[1])


def match(
    preds: DetectionSet, gts: DetectionSet, threshold: float, class_name: str
) -> list[tuple[Box3D, Box3D | None]]:
    """Greedily match predictions of one class to ground truths of one sample.

    Predictions are visited by descending score; each takes the nearest
    still-unmatched ground truth within the distance threshold, or None.
    """
    gt_boxes = [g for g in gts.boxes if g.class_name == class_name]
    pred_boxes = sorted(
        (p for p in preds.boxes if p.class_name == class_name),
        key=lambda b: -b.score,
    )
    taken: set[int] = set()
    out: list[tuple[Box3D, Box3D | None]] = []
    for p in pred_boxes:
        best, best_dist = None, float("inf")
        for gi, g in enumerate(gt_boxes):
            if gi in taken:
                continue
            d = center_distance(p, g)
            if d < best_dist:
                best, best_dist = gi, d
        if best is not None and best_dist <= threshold:
            taken.add(best)
            out.append((p, gt_boxes[best]))
        else:
            out.append((p, None))
    return out


def _interp_precision(decisions: list[tuple[float, bool]], n_gt: int) -> np.ndarray:
    """Precision sampled at 101 evenly spaced recall points.

    Decisions are (score, is_tp) pairs; ties are ordered true-positive
    first so the curve does not depend on sample order. Repeated recall
    values (false positives) collapse to their final precision, making the
    interpolation grid strictly increasing and the curve well defined.
    """
    if n_gt <= 0 or not decisions:
        return np.zeros(_N_RECALL_POINTS)
    ordered = sorted(decisions, key=lambda d: (-d[0], not d[1]))
    tp = np.cumsum([1.0 if hit else 0.0 for _, hit in ordered])
    fp = np.cumsum([0.0 if hit else 1.0 for _, hit in ordered])
    prec = tp / (tp + fp)
    rec = tp / float(n_gt)
    last = np.ones(len(rec), dtype=bool)
    last[:-1] = rec[1:] != rec[:-1]
    rec, prec = rec[last], prec[last]
    rec_interp = np.linspace(0.0, 1.0, _N_RECALL_POINTS)
    return np.interp(rec_interp, rec, prec, right=0.0)


def average_precision(
    decisions: list[tuple[float, bool]],
    n_gt: int,
    recall_range: tuple[float, float] = (0.1, 1.0),
    min_precision: float = 0.1,
) -> float:
    """AP over the clipped interpolated PR curve, in [0, 1].

    The area below the recall floor and the precision floor is removed and
    the remainder renormalized, so a perfect detector scores exactly 1.
    """
    if n_gt == 0:
        return 0.0
    prec = _interp_precision(decisions, n_gt)
    first = round(100 * recall_range[0]) + 1
    clipped = np.clip(prec[first:] - min_precision, 0.0, None)
    denom = len(clipped) * (1.0 - min_precision)
    ap = math.fsum(clipped) / denom
    return float(min(1.0, max(0.0, ap)))


def _scale_error(pred: Box3D, gt: Box3D) -> float:
    """1 - volumetric IoU of the sizes after aligning center and yaw."""
    inter = 1.0
    for dp, dg in zip(pred.size, gt.size):
        inter *= min(dp, dg)
    union = pred.volume + gt.volume - inter
    return 1.0 - inter / union


def _yaw_error(pred: Box3D, gt: Box3D, period: float) -> float:
    """Smallest absolute heading difference modulo the period."""
    d = (pred.yaw - gt.yaw) % period
    return float(min(d, period - d))


def tp_errors(
    pairs: list[tuple[Box3D, Box3D]],
    class_name: str,
    include_attribute_error: bool = False,
) -> dict[str, float]:
    """Mean translation/scale/orientation/velocity/attribute errors over
    matched pairs; 1.0 (worst) for every term when there are no pairs.

    Barrier headings are compared modulo a half turn. Attribute error is 0
    unless attribute labels exist (they do not in this box schema).
    """
    if not pairs:
        return {m: 1.0 for m in TP_METRICS}
    period = np.pi if class_name == "barrier" else 2.0 * np.pi
    ate = float(np.mean([center_distance(p, g) for p, g in pairs]))
    ase = float(np.mean([_scale_error(p, g) for p, g in pairs]))
    aoe = float(np.mean([_yaw_error(p, g, period) for p, g in pairs]))
    ave = float(
        np.mean(
            [math.hypot(p.velocity[0] - g.velocity[0], p.velocity[1] - g.velocity[1]) for p, g in pairs]
        )
    )
    aae = 0.0  # no attribute labels in this schema
    return {"ate": ate, "ase": ase, "aoe": aoe, "ave": ave, "aae": aae}


def nds(mean_ap: float, mean_errors: dict[str, float]) -> float:
    """Composite score: (5 * mAP + sum of (1 - min(1, err))) / 10.

    Errors enter raw (meters, ratio, radians, m/s, ratio), each clamped
    at 1 before inversion.
    """
    if not (0.0 <= mean_ap <= 1.0):
        raise ValueError("mean AP must be in [0,1]")
    terms = [1.0 - min(1.0, mean_errors[m]) for m in TP_METRICS]
    return (5.0 * mean_ap + math.fsum(terms)) / 10.0


def evaluate(
    preds: list[DetectionSet], gts: list[DetectionSet], cfg: EvalConfig = EvalConfig()
) -> EvalResult:
    """Full evaluation over parallel per-sample prediction/ground-truth sets.

    Classes without any ground truth are excluded from all averages. TP
    errors are computed from matches at cfg.tp_threshold.
    """
    if len(preds) != len(gts):
        raise ValueError(f"{len(preds)} prediction sets vs {len(gts)} ground-truth sets")
    by_id = {g.sample_id for g in gts}
    if len(by_id) != len(gts):
        raise ValueError("duplicate sample ids in ground truth")
    gt_map = {g.sample_id: g for g in gts}
    for p in preds:
        if p.sample_id not in gt_map:
            raise ValueError(f"prediction sample {p.sample_id!r} has no ground truth")

    per_class_ap: dict[str, dict[float, float]] = {}
    per_class_errors: dict[str, dict[str, float]] = {}
    n_gt_by_class: dict[str, int] = {}

    for cls in cfg.class_list:
        n_gt = sum(sum(1 for b in g.boxes if b.class_name == cls) for g in gts)
        if n_gt == 0:
            continue
        n_gt_by_class[cls] = n_gt
        aps: dict[float, float] = {}
        for th in cfg.dist_thresholds:
            decisions: list[tuple[float, bool]] = []
            for p in preds:
                for pred_box, gt_box in match(p, gt_map[p.sample_id], th, cls):
                    decisions.append((pred_box.score, gt_box is not None))
            aps[th] = average_precision(
                decisions, n_gt, cfg.recall_range, cfg.min_precision
            )
        per_class_ap[cls] = aps
        tp_pairs = [
            (pb, gb)
            for p in preds
            for pb, gb in match(p, gt_map[p.sample_id], cfg.tp_threshold, cls)
            if gb is not None
        ]
        per_class_errors[cls] = tp_errors(tp_pairs, cls, cfg.include_attribute_error)

    classes = list(per_class_ap)
    per_class_ap_mean = {
        cls: float(np.mean(list(per_class_ap[cls].values()))) for cls in classes
    }
    if classes:
        mean_ap = math.fsum(
            per_class_ap[c][t] for c in classes for t in cfg.dist_thresholds
        ) / (len(classes) * len(cfg.dist_thresholds))
        mean_errors = {
            m: math.fsum(per_class_errors[c][m] for c in classes) / len(classes)
            for m in TP_METRICS
        }
    else:
        mean_ap = 0.0
        mean_errors = {m: 1.0 for m in TP_METRICS}

    return EvalResult(
        per_class_ap=per_class_ap,
        per_class_ap_mean=per_class_ap_mean,
        mean_ap=mean_ap,
        per_class_errors=per_class_errors,
        mean_errors=mean_errors,
        nds=nds(mean_ap, mean_errors),
        n_gt=n_gt_by_class,
    )


def format_report(result: EvalResult, cfg: EvalConfig = EvalConfig()) -> str:
    """Human-readable per-class AP / error table plus the summary scores."""
    ths = cfg.dist_thresholds
    lines = []
    header = f"{'class':<22}" + "".join(f"AP@{t:<5g}" for t in ths) + f"{'AP':>7}"
    header += "".join(f"{m.upper():>8}" for m in TP_METRICS) + f"{'n_gt':>7}"
    lines.append(header)
    lines.append("-" * len(header))
    for cls in cfg.class_list:
        if cls not in result.per_class_ap:
            continue
        row = f"{cls:<22}"
        row += "".join(f"{result.per_class_ap[cls][t]:<8.4f}" for t in ths)
        row += f"{result.per_class_ap_mean[cls]:>7.4f}"
        row += "".join(f"{result.per_class_errors[cls][m]:>8.4f}" for m in TP_METRICS)
        row += f"{result.n_gt[cls]:>7d}"
        lines.append(row)
    lines.append("-" * len(header))
    lines.append(f"mAP: {result.mean_ap:.4f}")
    for m in TP_METRICS:
        lines.append(f"m{m.upper()}: {result.mean_errors[m]:.4f}")
    lines.append(f"NDS: {result.nds:.4f}")
    return "\n".join(lines) + "\n"
