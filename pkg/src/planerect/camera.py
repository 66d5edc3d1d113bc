"""Pinhole camera math: back-projection, viewing rays, surface normals.

Camera frame convention: x right, y down, z forward (pixel u grows with x,
v with y). Valid normals are unit length and face the camera (n . ray < 0).
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import InvalidDepthError, OrientationError


@dataclass(frozen=True)
class Intrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if not (self.width > 0 and self.height > 0):
            raise ValueError("image dimensions must be positive")
        if not (np.isfinite(self.cx) and np.isfinite(self.cy)):
            raise ValueError("principal point must be finite")

    @property
    def K(self):
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )

    @property
    def K_inv(self):
        return np.array(
            [
                [1.0 / self.fx, 0.0, -self.cx / self.fx],
                [0.0, 1.0 / self.fy, -self.cy / self.fy],
                [0.0, 0.0, 1.0],
            ]
        )

    def to_dict(self):
        return {
            "fx": self.fx,
            "fy": self.fy,
            "cx": self.cx,
            "cy": self.cy,
            "width": self.width,
            "height": self.height,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            fx=float(d["fx"]),
            fy=float(d["fy"]),
            cx=float(d["cx"]),
            cy=float(d["cy"]),
            width=int(d["width"]),
            height=int(d["height"]),
        )


@dataclass(frozen=True)
class DepthMap:
    """Per-pixel depth with a validity mask (valid = finite and > 0)."""

    depth: np.ndarray  # (H, W) float64
    valid: np.ndarray  # (H, W) bool

    @classmethod
    def from_array(cls, depth):
        depth = np.asarray(depth, dtype=np.float64)
        valid = np.isfinite(depth) & (depth > 0)
        return cls(depth=depth, valid=valid)

    @property
    def shape(self):
        return self.depth.shape


@dataclass(frozen=True)
class PointGrid:
    points: np.ndarray  # (H, W, 3) float64, camera frame
    valid: np.ndarray  # (H, W) bool


@dataclass(frozen=True)
class NormalMap:
    normals: np.ndarray  # (H, W, 3) float64, unit, camera-facing
    valid: np.ndarray  # (H, W) bool


def backproject(u, v, d, K: Intrinsics):
    """Lift pixel (u, v) at depth d to a 3D point in the camera frame."""
    d = float(d)
    if not (np.isfinite(d) and d > 0):
        raise InvalidDepthError(f"depth must be positive and finite, got {d}")
    return np.array([d * (u - K.cx) / K.fx, d * (v - K.cy) / K.fy, d])


def project(p, K: Intrinsics):
    """Project a camera-frame point to pixel coordinates."""
    p = np.asarray(p, dtype=np.float64)
    return np.array([K.fx * p[0] / p[2] + K.cx, K.fy * p[1] / p[2] + K.cy])


def pixel_grid(K: Intrinsics):
    u = np.arange(K.width, dtype=np.float64)
    v = np.arange(K.height, dtype=np.float64)
    return np.meshgrid(u, v)


def backproject_map(depth: DepthMap, K: Intrinsics) -> PointGrid:
    """Per-pixel back-projection of a depth map; invalid depths stay invalid."""
    h, w = depth.shape
    if (w, h) != (K.width, K.height):
        raise ValueError(
            f"depth map is {w}x{h} but intrinsics expect {K.width}x{K.height}"
        )
    gu, gv = pixel_grid(K)
    d = np.where(depth.valid, depth.depth, 0.0)
    pts = np.empty((h, w, 3), dtype=np.float64)
    pts[..., 0] = d * (gu - K.cx) / K.fx
    pts[..., 1] = d * (gv - K.cy) / K.fy
    pts[..., 2] = d
    return PointGrid(points=pts, valid=depth.valid.copy())


def viewing_ray(K: Intrinsics, u, v):
    """Unit direction of the ray through pixel (u, v)."""
    r = np.array([(u - K.cx) / K.fx, (v - K.cy) / K.fy, 1.0])
    return r / np.linalg.norm(r)


def ray_grid(K: Intrinsics):
    """Unit viewing rays for every pixel, shape (H, W, 3)."""
    gu, gv = pixel_grid(K)
    r = np.empty((K.height, K.width, 3), dtype=np.float64)
    r[..., 0] = (gu - K.cx) / K.fx
    r[..., 1] = (gv - K.cy) / K.fy
    r[..., 2] = 1.0
    r /= np.linalg.norm(r, axis=-1, keepdims=True)
    return r


def estimate_normals(points: PointGrid, K: Intrinsics, window: int = 5) -> NormalMap:
    """Per-pixel total-least-squares plane fit over a window x window patch.

    Pixels with fewer than 6 valid window points, or a degenerate fit, are
    invalid. Normals are oriented toward the camera (n . ray < 0).
    """
    if window < 3 or window % 2 == 0:
        raise ValueError("window must be odd and >= 3")
    half = window // 2
    normals, ok = kernels.plane_normals(points.points, points.valid, half, 6)

    rays = ray_grid(K)
    dots = np.einsum("...i,...i->...", normals, rays)
    flip = dots > 0
    normals = np.where(flip[..., None], -normals, normals)
    ok = ok & (np.abs(dots) > 0)
    normals = np.where(ok[..., None], normals, 0.0)
    return NormalMap(normals=normals, valid=ok)


def incidence_angle(n, r):
    """Angle in degrees between the surface and the viewing direction's
    reverse: 0 for fronto-parallel, approaching 90 at glancing incidence."""
    n = np.asarray(n, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64)
    dot = float(n @ r)
    if dot >= 0:
        raise OrientationError("normal must face the camera (n . ray < 0)")
    return float(np.degrees(np.arccos(min(-dot, 1.0))))


def incidence_angle_map(normal, K: Intrinsics):
    """Per-pixel incidence angle (degrees) of a single plane normal.

    Pixels where the normal does not face the camera get angle >= 90.
    """
    rays = ray_grid(K)
    dots = rays @ np.asarray(normal, dtype=np.float64)
    cosang = np.clip(-dots, -1.0, 1.0)
    return np.degrees(np.arccos(cosang))
