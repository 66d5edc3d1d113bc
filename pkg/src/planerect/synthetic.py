"""Deterministic synthetic scenes with exact depth, normals and homographies.

World frame is right-handed with z up; the ground is the z = 0 plane.
Rendering is analytic ray-plane intersection with point-sampled procedural
texture (seeded checkerboard + value noise), so depth maps and plane-induced
homographies are exact oracles for the pipeline.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .camera import DepthMap, Intrinsics
from .errors import DegenerateGeometryError

WORLD_UP = np.array([0.0, 0.0, 1.0])


@dataclass(frozen=True)
class ScenePlane:
    origin: np.ndarray          # world point at local (0, 0)
    axis_u: np.ndarray          # unit, in-plane
    axis_v: np.ndarray          # unit, in-plane, orthogonal to axis_u
    extent: tuple               # (size along u, size along v), meters
    checker_period: float = 0.5
    noise_amplitude: float = 0.35
    noise_scale: float = 0.15
    seed: int = 0

    def __post_init__(self):
        u = np.asarray(self.axis_u, dtype=np.float64)
        v = np.asarray(self.axis_v, dtype=np.float64)
        if abs(np.linalg.norm(u) - 1) > 1e-9 or abs(np.linalg.norm(v) - 1) > 1e-9:
            raise ValueError("plane axes must be unit vectors")
        if abs(u @ v) > 1e-9:
            raise ValueError("plane axes must be orthogonal")
        if not (self.extent[0] > 0 and self.extent[1] > 0):
            raise ValueError("plane extent must be positive")

    @property
    def normal(self):
        return np.cross(self.axis_u, self.axis_v)


@dataclass(frozen=True)
class CameraPose:
    R: np.ndarray  # world -> camera rotation
    C: np.ndarray  # camera center, world

    def __post_init__(self):
        R = np.asarray(self.R, dtype=np.float64)
        if not np.allclose(R.T @ R, np.eye(3), atol=1e-9) or np.linalg.det(R) < 0:
            raise ValueError("R must be a rotation matrix")


def look_at(center, target, up=WORLD_UP):
    """Camera pose at `center` with optical axis toward `target`.

    Camera convention: x right, y down, z forward.
    """
    center = np.asarray(center, dtype=np.float64)
    f = np.asarray(target, dtype=np.float64) - center
    nf = np.linalg.norm(f)
    if nf == 0:
        raise ValueError("target coincides with camera center")
    f = f / nf
    x = np.cross(f, up)
    nx = np.linalg.norm(x)
    if nx < 1e-12:
        raise ValueError("viewing direction parallel to up vector")
    x = x / nx
    y = np.cross(f, x)
    return CameraPose(R=np.stack([x, y, f]), C=center)


def relative_pose(pose_a: CameraPose, pose_b: CameraPose):
    """(R_ab, t_ab) with x_b = R_ab @ x_a + t_ab (camera coordinates)."""
    R_ab = pose_b.R @ pose_a.R.T
    t_ab = pose_b.R @ (pose_a.C - pose_b.C)
    return R_ab, t_ab


def _hash01(ix, iy, seed):
    """Deterministic lattice hash -> [0, 1)."""
    h = (ix.astype(np.uint64) * np.uint64(0x9E3779B97F4A7C15)) ^ (
        iy.astype(np.uint64) * np.uint64(0xC2B2AE3D27D4EB4F)
    ) ^ np.uint64(seed * 0x165667B19E3779F9 & 0xFFFFFFFFFFFFFFFF)
    h ^= h >> np.uint64(33)
    h *= np.uint64(0xFF51AFD7ED558CCD)
    h ^= h >> np.uint64(33)
    return (h >> np.uint64(11)).astype(np.float64) / float(1 << 53)


def _value_noise(a, b, scale, seed):
    ax = a / scale
    ay = b / scale
    ix = np.floor(ax)
    iy = np.floor(ay)
    fx = ax - ix
    fy = ay - iy
    # smoothstep weights
    wx = fx * fx * (3 - 2 * fx)
    wy = fy * fy * (3 - 2 * fy)
    ix = ix.astype(np.int64)
    iy = iy.astype(np.int64)
    v00 = _hash01(ix, iy, seed)
    v01 = _hash01(ix + 1, iy, seed)
    v10 = _hash01(ix, iy + 1, seed)
    v11 = _hash01(ix + 1, iy + 1, seed)
    return (
        v00 * (1 - wx) * (1 - wy)
        + v01 * wx * (1 - wy)
        + v10 * (1 - wx) * wy
        + v11 * wx * wy
    )


def plane_texture(plane: ScenePlane, a, b):
    """Procedural intensity at plane-local coordinates (a, b), in [0, 1]."""
    checker = (
        (np.floor(a / plane.checker_period) + np.floor(b / plane.checker_period)) % 2
    )
    base = 0.3 + 0.4 * checker
    n1 = _value_noise(a, b, plane.noise_scale, plane.seed)
    n2 = _value_noise(a, b, plane.noise_scale * 0.37, plane.seed + 7)
    noise = 0.65 * n1 + 0.35 * n2 - 0.5
    return np.clip(base + plane.noise_amplitude * 2.0 * noise, 0.0, 1.0)


def render_view(scene, pose: CameraPose, K: Intrinsics):
    """Render a list of ScenePlane with z-buffering.

    Returns (image (H,W) float in [0,1], DepthMap, plane_id (H,W) int32 with
    -1 for background).
    """
    h, w = K.height, K.width
    gu, gv = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    # camera-frame pixel rays with z = 1, rotated to world
    dc = np.stack([(gu - K.cx) / K.fx, (gv - K.cy) / K.fy, np.ones_like(gu)], axis=-1)
    dw = dc @ pose.R  # == (R.T @ dc) per pixel

    depth = np.full((h, w), np.inf)
    image = np.zeros((h, w))
    plane_id = np.full((h, w), -1, dtype=np.int32)

    for idx, plane in enumerate(scene):
        n = plane.normal
        denom = dw @ n
        num = float(n @ (plane.origin - pose.C))
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(np.abs(denom) > 1e-14, num / denom, np.inf)
        hit = (t > 1e-9) & np.isfinite(t)
        X = pose.C + t[..., None] * dw
        rel = X - plane.origin
        a = rel @ plane.axis_u
        b = rel @ plane.axis_v
        hit &= (a >= 0) & (a <= plane.extent[0]) & (b >= 0) & (b <= plane.extent[1])
        # depth along the optical axis equals t because ray z-component is 1
        closer = hit & (t < depth)
        if not closer.any():
            continue
        tex = plane_texture(plane, a[closer], b[closer])
        image[closer] = tex
        depth[closer] = t[closer]
        plane_id[closer] = idx

    valid = np.isfinite(depth)
    depth = np.where(valid, depth, 0.0)
    return image, DepthMap(depth=depth, valid=valid), plane_id


def plane_to_image(plane: ScenePlane, pose: CameraPose, K: Intrinsics):
    """3x3 map from plane-local homogeneous (a, b, 1) to pixel coordinates."""
    cols = np.stack(
        [
            pose.R @ plane.axis_u,
            pose.R @ plane.axis_v,
            pose.R @ (plane.origin - pose.C),
        ],
        axis=1,
    )
    return K.K @ cols


def gt_plane_homography(plane, pose_1, pose_2, K_1, K_2):
    """Exact plane-induced homography: view-1 pixels on the plane to view 2."""
    M1 = plane_to_image(plane, pose_1, K_1)
    M2 = plane_to_image(plane, pose_2, K_2)
    if abs(np.linalg.det(M1)) < 1e-12 or abs(np.linalg.det(M2)) < 1e-12:
        raise DegenerateGeometryError("plane is edge-on in one of the views")
    H = M2 @ np.linalg.inv(M1)
    return H / H[2, 2]


def add_depth_noise(depth: DepthMap, sigma_frac, rng):
    """Multiplicative Gaussian depth noise with std sigma_frac * depth."""
    if sigma_frac <= 0:
        return depth
    noisy = depth.depth * (1.0 + sigma_frac * rng.standard_normal(depth.depth.shape))
    noisy = np.where(depth.valid, noisy, 0.0)
    return DepthMap.from_array(noisy)


def default_intrinsics(width=320, height=240, focal=260.0):
    return Intrinsics(
        fx=focal, fy=focal, cx=(width - 1) / 2.0, cy=(height - 1) / 2.0,
        width=width, height=height,
    )


LAYOUTS = ("single_plane", "two_orthogonal", "ground_plus_wall", "opposite_ground")


def _ground(seed, size=40.0):
    return ScenePlane(
        origin=np.array([-size / 2, -size / 2, 0.0]),
        axis_u=np.array([1.0, 0.0, 0.0]),
        axis_v=np.array([0.0, 1.0, 0.0]),
        extent=(size, size),
        seed=seed,
    )


def _wall(seed, x0=4.0, width=16.0, height=6.0):
    # vertical plane x = x0, normal along -x after u x v = (0,1,0) x (0,0,1)
    return ScenePlane(
        origin=np.array([x0, -width / 2, 0.0]),
        axis_u=np.array([0.0, 1.0, 0.0]),
        axis_v=np.array([0.0, 0.0, 1.0]),
        extent=(width, height),
        checker_period=0.4,
        seed=seed + 101,
    )


@dataclass(frozen=True)
class TwoViewCase:
    scene: list
    pose_a: CameraPose
    pose_b: CameraPose
    K_a: Intrinsics
    K_b: Intrinsics
    R_ab: np.ndarray = field(default=None)
    t_ab: np.ndarray = field(default=None)
    layout: str = ""

    def render(self, which):
        pose = self.pose_a if which == "a" else self.pose_b
        K = self.K_a if which == "a" else self.K_b
        return render_view(self.scene, pose, K)


def two_view_case(view_angle_sep, distance, layout, seed, K=None) -> TwoViewCase:
    """Two calibrated views of a synthetic layout.

    Camera B looks at the same target from a slightly higher elevation and
    an azimuth gap solved so the ground-truth relative rotation magnitude
    equals view_angle_sep exactly. The opposite_ground layout forces a 180
    degree separation over a lone ground plane.
    """
    if layout not in LAYOUTS:
        raise ValueError(f"unknown layout {layout!r}; expected one of {LAYOUTS}")
    if not (0 <= view_angle_sep <= 180):
        raise ValueError("view_angle_sep must be in [0, 180]")
    if distance <= 0:
        raise ValueError("distance must be positive")
    rng = np.random.default_rng(seed)
    K = K or default_intrinsics()

    tex_seed = int(rng.integers(0, 2**31 - 1))
    if layout == "single_plane":
        # oblique enough that unrectified descriptors feel the shifting
        # foreshortening at wide separations; a small plate keeps the two
        # footprints overlapping at any azimuth gap
        scene = [_ground(tex_seed, size=12.0)]
        elevation = 30.0
    elif layout == "two_orthogonal":
        # wall sits outside the camera-orbit radius so no view angle ever
        # puts a camera behind it
        scene = [_ground(tex_seed), _wall(tex_seed, x0=8.0, width=10.0, height=5.0)]
        elevation = 28.0
    elif layout == "ground_plus_wall":
        scene = [_ground(tex_seed), _wall(tex_seed, x0=4.0, height=4.0)]
        elevation = 22.0
    else:  # opposite_ground
        # small plate keeps the glancing wedge (and thus the rectified
        # output) bounded even from the shallow second viewpoint
        scene = [_ground(tex_seed, size=14.0)]
        elevation = 40.0
        view_angle_sep = 180.0

    # seeded jitter keeps distinct pairs from being identical scenes
    target = np.array([rng.uniform(-0.8, 0.8), rng.uniform(-0.8, 0.8), 0.0])
    elevation = elevation + rng.uniform(-4.0, 4.0)
    if layout in ("two_orthogonal", "ground_plus_wall"):
        # start facing the wall so view A actually contains both planes
        azimuth = 180.0 + rng.uniform(-25.0, 25.0)
    else:
        azimuth = rng.uniform(0.0, 360.0)
    d = distance * rng.uniform(0.9, 1.1)

    el = np.radians(elevation)
    az = np.radians(azimuth)
    offset = d * np.array([np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.sin(el)])
    pose_a = look_at(target + offset, target)

    if layout == "opposite_ground":
        # opposite azimuth at a lower elevation: the two views foreshorten
        # the ground differently, so only rectified matching bridges them
        el_b = np.radians(elevation - 20.0)
        az_b = az + np.pi
        offset_b = d * np.array(
            [np.cos(el_b) * np.cos(az_b), np.cos(el_b) * np.sin(az_b), np.sin(el_b)]
        )
        pose_b = look_at(target + offset_b, target)
    else:
        # Camera B looks at the same target from a higher elevation and a
        # solved azimuth gap. The elevation offset breaks the equal-elevation
        # symmetry (two same-height views of the ground differ only by an
        # in-plane rotation, which any rotation-invariant descriptor undoes)
        # while keeping the overlap centered on the shared target. The
        # azimuth gap is solved so the total rotation magnitude equals
        # view_angle_sep exactly.
        d_el = min(12.0, 0.25 * view_angle_sep, 0.5 * (180.0 - view_angle_sep))
        d_el *= rng.uniform(0.7, 1.0)
        el_b = np.radians(elevation + d_el)

        def pose_at(d_az_deg):
            az_b = az + np.radians(d_az_deg)
            off = d * np.array(
                [np.cos(el_b) * np.cos(az_b), np.cos(el_b) * np.sin(az_b), np.sin(el_b)]
            )
            return look_at(target + off, target)

        def mag_minus_sep(d_az_deg):
            R = pose_at(d_az_deg).R @ pose_a.R.T
            cos = np.clip((np.trace(R) - 1.0) / 2.0, -1.0, 1.0)
            return np.degrees(np.arccos(cos)) - view_angle_sep

        if view_angle_sep < 1e-12:
            pose_b = CameraPose(R=pose_a.R.copy(), C=pose_a.C.copy())
        else:
            d_az = brentq(mag_minus_sep, 0.0, 180.0, xtol=1e-12)
            pose_b = pose_at(d_az)

    R_ab, t_ab = relative_pose(pose_a, pose_b)
    nt = np.linalg.norm(t_ab)
    t_dir = t_ab / nt if nt > 1e-12 else np.zeros(3)
    return TwoViewCase(
        scene=scene, pose_a=pose_a, pose_b=pose_b, K_a=K, K_b=K,
        R_ab=R_ab, t_ab=t_dir, layout=layout,
    )
