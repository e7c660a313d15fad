"""A single annotated sample: point cloud, surround cameras, ground-truth
boxes and optional per-camera feature images."""

from __future__ import annotations

from dataclasses import dataclass, field

from .boxes import Box3D
from .geometry import CameraModel, PointCloud
from .lift_splat import FeatureImage


@dataclass
class Scene:
    sample_id: str
    cloud: PointCloud
    cameras: list[CameraModel]
    boxes: list[Box3D] = field(default_factory=list)
    features: list[FeatureImage] | None = None

    def __post_init__(self):
        if len(self.cameras) < 1:
            raise ValueError("a scene needs at least one camera")
        if self.features is not None:
            if len(self.features) != len(self.cameras):
                raise ValueError("features must parallel the camera list")
            for cam, feat in zip(self.cameras, self.features):
                h, w, _ = feat.shape
                if h * feat.stride != cam.height or w * feat.stride != cam.width:
                    raise ValueError(
                        f"feature map {h}x{w} at stride {feat.stride} does not "
                        f"match image {cam.width}x{cam.height}"
                    )
