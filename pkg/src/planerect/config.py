"""Run configuration: every pipeline tunable with its default."""

import json
from dataclasses import asdict, dataclass, field, fields


@dataclass
class RunConfig:
    normal_window: int = 5
    clusters: int = 3
    theta_assign: float = 30.0
    theta_max: float = 80.0          # glancing-angle trim
    min_patch_frac: float = 0.005    # of image pixels
    max_output_dim: int = 4096
    ratio: float = 0.8               # Lowe ratio threshold
    homography_inlier_px: float = 10.0
    sampson_px: float = 2.0
    success_deg: float = 5.0
    seed: int = 0
    clustering_mode: str = "orthogonal"   # or "histogram"
    extractor: str = "reference"
    max_features: int = 1500
    cluster_stride: int = 2
    histogram_bins: int = 200
    histogram_threshold_frac: float = 0.05
    histogram_nms_deg: float = 15.0
    ground_axis_deg: float = 25.0    # gate for ground-only rectification
    keypoint_jacobian_transport: bool = True
    depth_smooth_sigma: float = 0.0  # Gaussian pre-smoothing of depth, in px
    threads: int = 1

    def __post_init__(self):
        for name in ("theta_assign", "theta_max"):
            v = getattr(self, name)
            if not (0.0 < v <= 90.0):
                raise ValueError(f"{name} must be in (0, 90], got {v}")
        for name in ("min_patch_frac", "ratio", "histogram_threshold_frac"):
            v = getattr(self, name)
            if not (0.0 < v < 1.0):
                raise ValueError(f"{name} must be in (0, 1), got {v}")
        for name in ("max_output_dim", "normal_window", "max_features", "threads"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.depth_smooth_sigma < 0.0:
            raise ValueError(
                f"depth_smooth_sigma must be >= 0, got {self.depth_smooth_sigma}"
            )
        if self.clustering_mode not in ("orthogonal", "histogram"):
            raise ValueError("clustering_mode must be 'orthogonal' or 'histogram'")

    def to_json(self):
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))

    def replace(self, **kw):
        d = asdict(self)
        d.update(kw)
        return RunConfig.from_dict(d)
