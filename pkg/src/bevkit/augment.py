"""Ground-truth paste augmentation with collision checking, plus the fade
schedule that turns pasting off for the final training epochs."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .boxes import Box3D, bev_iou, box_local_points, box_world_points, points_in_box
from .geometry import PointCloud


@dataclass(frozen=True)
class FadeSchedule:
    """Pasting runs for epochs [0, fade_start_epoch) of total_epochs."""

    total_epochs: int = 20
    fade_start_epoch: int = 15

    def __post_init__(self):
        if not (0 <= self.fade_start_epoch <= self.total_epochs):
            raise ValueError("need 0 <= fade_start_epoch <= total_epochs")


def paste_enabled(epoch: int, sched: FadeSchedule) -> bool:
    """Whether paste augmentation is active at a zero-based epoch."""
    if not (0 <= epoch < sched.total_epochs):
        raise ValueError(f"epoch {epoch} outside [0, {sched.total_epochs})")
    return epoch < sched.fade_start_epoch


@dataclass
class GtEntry:
    """One cropped object: its box and the points inside it, box-local."""

    box: Box3D
    local_points: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.local_points, dtype=np.float64).reshape(-1, 4)
        l, w, h = self.box.size
        # tolerance covers float32 round trips of points sitting on a face
        tol = 1e-5
        if p.size and (
            np.abs(p[:, 0]).max() > l / 2 + tol
            or np.abs(p[:, 1]).max() > w / 2 + tol
            or np.abs(p[:, 2]).max() > h / 2 + tol
        ):
            raise ValueError("stored points must lie inside the box")
        self.local_points = p


@dataclass
class GtDatabase:
    entries: dict[str, list[GtEntry]] = field(default_factory=dict)

    def __len__(self) -> int:
        return sum(len(v) for v in self.entries.values())


def build_database(scenes: list[tuple[PointCloud, list[Box3D]]]) -> GtDatabase:
    """Crop every ground-truth box's points (closed containment) into a
    class-keyed database of box-local point sets."""
    db = GtDatabase()
    for cloud, gt_boxes in scenes:
        for box in gt_boxes:
            inside = points_in_box(box, cloud.xyz)
            local = box_local_points(box, cloud.points[inside])
            db.entries.setdefault(box.class_name, []).append(GtEntry(box, local))
    return db


@dataclass
class PasteResult:
    cloud: PointCloud
    boxes: list[Box3D]
    pasted: list[Box3D]
    requested: dict[str, int]
    accepted: dict[str, int]


def paste(
    cloud: PointCloud,
    boxes: list[Box3D],
    db: GtDatabase,
    quota: dict[str, int],
    rng_seed: int,
) -> PasteResult:
    """Paste database objects into a scene, rejecting any BEV overlap.

    Entries are sampled without replacement per class (classes in sorted
    order); a candidate is accepted iff its box footprint is disjoint from
    every existing and previously accepted box. Deterministic for a fixed
    seed; quota shortfall is reported, not an error.
    """
    rng = np.random.default_rng(rng_seed)
    all_boxes = list(boxes)
    pasted: list[Box3D] = []
    chunks = [cloud.points]
    accepted: dict[str, int] = {}
    for cls in sorted(quota):
        want = quota[cls]
        accepted[cls] = 0
        if want <= 0:
            continue
        pool = db.entries.get(cls, [])
        if not pool:
            continue
        order = rng.permutation(len(pool))
        for idx in order:
            if accepted[cls] >= want:
                break
            entry = pool[idx]
            if any(bev_iou(entry.box, other) > 0.0 for other in all_boxes):
                continue
            all_boxes.append(entry.box)
            pasted.append(entry.box)
            chunks.append(box_world_points(entry.box, entry.local_points))
            accepted[cls] += 1
    return PasteResult(
        cloud=PointCloud(np.concatenate(chunks, axis=0)),
        boxes=all_boxes,
        pasted=pasted,
        requested=dict(quota),
        accepted=accepted,
    )
