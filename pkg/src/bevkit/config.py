"""Single configuration object tying the whole pipeline together.

Defaults: 704x256 images with stride-8 features, 60 uniform depth bins
over [1, 61) m, (0.075, 0.075, 0.2) m voxels over a [-54, 54] m ground
window with z in [-5, -3] m, and a 0.6 m BEV cell (so the LiDAR pyramid's
stride-8 scale lands exactly on the camera BEV grid).
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .augment import FadeSchedule
from .depth import DepthBinSpec
from .ensemble import TtaConfig, WbfConfig
from .lidar_bev import VoxelSpec
from .lift_splat import BevGridSpec
from .metrics import EvalConfig


def _default_paste_quota() -> dict[str, int]:
    return {"car": 2, "pedestrian": 2, "traffic_cone": 2}


@dataclass(frozen=True)
class PipelineConfig:
    image_width: int = 704
    image_height: int = 256
    feature_stride: int = 8
    feature_channels: int = 4
    depth_bins: DepthBinSpec = DepthBinSpec()
    voxel: VoxelSpec = VoxelSpec()
    bev_cell_size: float = 0.6
    pyramid_strides: tuple[int, ...] = (1, 2, 4, 8)
    # Scales that get z-compressed and fused; finer scales stay sparse only
    # (dense stride-1 maps at 0.075 m over a 108 m window do not fit in RAM).
    fusion_strides: tuple[int, ...] = (4, 8)
    nms_iou_threshold: float = 0.2
    nms_score_threshold: float = 0.0
    tta: TtaConfig = TtaConfig()
    wbf: WbfConfig = WbfConfig()
    eval: EvalConfig = EvalConfig()
    fade: FadeSchedule = FadeSchedule()
    paste_quota: dict[str, int] = field(default_factory=_default_paste_quota)
    seed: int = 0

    def __post_init__(self):
        if self.image_width % self.feature_stride or self.image_height % self.feature_stride:
            raise ValueError(
                f"feature stride {self.feature_stride} does not divide "
                f"{self.image_width}x{self.image_height}"
            )
        if abs(self.voxel.vx - self.voxel.vy) > 1e-12:
            raise ValueError("ground-plane voxels must be square")
        ratio = self.bev_cell_size / self.voxel.vx
        target = round(ratio)
        if abs(ratio - target) > 1e-6 or target < 1 or target & (target - 1):
            raise ValueError(
                "bev_cell_size must be a power-of-two multiple of the voxel size"
            )
        if tuple(self.pyramid_strides) != tuple(sorted(self.pyramid_strides)):
            raise ValueError("pyramid strides must be ascending")
        if any(s not in self.pyramid_strides for s in self.fusion_strides):
            raise ValueError("fusion strides must be a subset of the pyramid strides")
        # BevGridSpec construction validates divisibility of the window.
        self.bev_spec(1)

    @property
    def feature_width(self) -> int:
        return self.image_width // self.feature_stride

    @property
    def feature_height(self) -> int:
        return self.image_height // self.feature_stride

    @property
    def lidar_target_stride(self) -> int:
        """Pyramid stride whose cell matches the BEV grid cell."""
        return round(self.bev_cell_size / self.voxel.vx)

    def bev_spec(self, channels: int) -> BevGridSpec:
        return BevGridSpec(
            x_min=self.voxel.x_min,
            x_max=self.voxel.x_max,
            y_min=self.voxel.y_min,
            y_max=self.voxel.y_max,
            cell_size=self.bev_cell_size,
            channels=channels,
        )
