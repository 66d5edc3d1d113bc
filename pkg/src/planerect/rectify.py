"""Per-patch perspective rectification.

Each planar patch gets a virtual fronto-parallel camera: the same center,
rotated by the smallest rotation aligning the optical axis with the patch
normal. The induced pixel map is H = S * K * R * K^-1 where S is a
similarity chosen to keep the patch area roughly constant and anchored at
the output origin.
"""

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from . import kernels
from .camera import (
    DepthMap,
    Intrinsics,
    backproject_map,
    estimate_normals,
    incidence_angle_map,
)
from .config import RunConfig
from .errors import DegenerateGeometryError
from .segmentation import (
    FOUR_CONN,
    PlanarPatch,
    cluster_normals_histogram,
    cluster_normals_orthogonal,
    connected_components,
    refine_patch_normal,
)

EZ = np.array([0.0, 0.0, 1.0])


def smooth_depth(depth: DepthMap, sigma: float) -> DepthMap:
    """Valid-aware Gaussian smoothing of a depth map.

    Invalid pixels contribute zero weight and stay invalid in the result.
    Useful when the depth source carries per-pixel noise that would swamp
    window-based normal estimation.
    """
    if sigma <= 0:
        return depth
    weight = ndimage.gaussian_filter(depth.valid.astype(np.float64), sigma)
    total = ndimage.gaussian_filter(np.where(depth.valid, depth.depth, 0.0), sigma)
    out = np.where(
        depth.valid & (weight > 1e-12), total / np.maximum(weight, 1e-12), np.nan
    )
    return DepthMap.from_array(out)


@dataclass(frozen=True)
class RectifiedPatch:
    patch: PlanarPatch          # source patch with refined normal
    trimmed_mask: np.ndarray    # after glancing-angle trim
    H: np.ndarray               # original pixels -> rectified pixels
    width: int
    height: int
    scale: float
    image: np.ndarray           # rectified raster
    valid: np.ndarray           # rectified validity mask


@dataclass(frozen=True)
class RectifiedSet:
    patches: list
    nonplanar_mask: np.ndarray


def rectifying_rotation(n):
    """Smallest rotation mapping the desired optical axis d = -n onto e_z."""
    n = np.asarray(n, dtype=np.float64)
    d = -n / np.linalg.norm(n)
    c = float(d @ EZ)
    if c > 1.0 - 1e-15:
        return np.eye(3)
    if c < -1.0 + 1e-12:
        raise DegenerateGeometryError(
            "patch normal is anti-parallel to the optical axis"
        )
    axis = np.cross(d, EZ)
    s = np.linalg.norm(axis)
    a = axis / s
    K = np.array([[0, -a[2], a[1]], [a[2], 0, -a[0]], [-a[1], a[0], 0]])
    return np.eye(3) + s * K + (1 - c) * (K @ K)


def glancing_mask(mask, normal, K: Intrinsics, theta_max: float = 80.0):
    """Drop pixels seen at more than theta_max degrees incidence; keep the
    largest remaining 4-connected component. Returns None if nothing is
    left."""
    angles = incidence_angle_map(normal, K)
    kept = mask & (angles <= theta_max)
    if not kept.any():
        return None
    comp, n = ndimage.label(kept, structure=FOUR_CONN)
    if n > 1:
        sizes = np.bincount(comp.ravel())
        sizes[0] = 0
        kept = comp == int(np.argmax(sizes))
    return kept


def rectifying_homography(K: Intrinsics, R, mask, max_output_dim: int = 4096):
    """Compose K R K^-1 with an area-preserving similarity anchored at (0,0).

    Returns (H, (width, height), scale). The uniform scale makes the warped
    mask area match the source mask area, clamped so that neither output
    dimension exceeds max_output_dim.
    """
    ys, xs = np.nonzero(mask)
    if len(xs) == 0:
        raise ValueError("mask is empty")
    H0 = K.K @ R @ K.K_inv
    det0 = np.linalg.det(H0)
    if abs(det0) < 1e-12:
        raise DegenerateGeometryError("rectifying homography is near singular")

    w3 = H0[2, 0] * xs + H0[2, 1] * ys + H0[2, 2]
    if np.any(np.abs(w3) < 1e-12):
        raise DegenerateGeometryError("mask crosses the virtual camera horizon")
    px = (H0[0, 0] * xs + H0[0, 1] * ys + H0[0, 2]) / w3
    py = (H0[1, 0] * xs + H0[1, 1] * ys + H0[1, 2]) / w3

    # |det J| of the projective map integrates to the warped area
    warped_area = float(np.sum(np.abs(det0) / np.abs(w3) ** 3))
    src_area = float(len(xs))
    s = np.sqrt(src_area / warped_area)

    span_x = px.max() - px.min()
    span_y = py.max() - py.min()
    max_span = max(span_x, span_y)
    if s * max_span > max_output_dim - 1 and max_span > 0:
        s = (max_output_dim - 1) / max_span

    tx = -s * px.min()
    ty = -s * py.min()
    H = np.array([[s, 0.0, tx], [0.0, s, ty], [0.0, 0.0, 1.0]]) @ H0
    if abs(H[2, 2]) > 1e-12:
        H = H / H[2, 2]
    width = int(np.floor(s * px.max() + tx)) + 1
    height = int(np.floor(s * py.max() + ty)) + 1
    return H, (width, height), float(s)


def warp_patch(image, H, dims, mask):
    """Inverse-map bilinear warp of `image` restricted to `mask`."""
    if abs(np.linalg.det(H)) < 1e-12:
        raise DegenerateGeometryError("homography is not invertible")
    width, height = dims
    hinv = np.linalg.inv(H)
    out, valid = kernels.warp_bilinear(
        np.ascontiguousarray(image, dtype=np.float64),
        np.ascontiguousarray(mask, dtype=bool),
        hinv,
        int(height),
        int(width),
    )
    return out, valid


def backwarp_keypoints(xy, scale, orientation, H, image_size, transport=True):
    """Map keypoints from rectified coordinates back through H^-1.

    Scale is multiplied by the local sqrt|det J| of the inverse map and the
    orientation is rotated by its local linearization (disabled when
    transport is False). Returns (xy, scale, orientation, keep) where keep
    drops points landing outside the original image.
    """
    if abs(np.linalg.det(H)) < 1e-12:
        raise DegenerateGeometryError("homography is not invertible")
    hinv = np.linalg.inv(H)
    xy = np.asarray(xy, dtype=np.float64).reshape(-1, 2)
    x, y = xy[:, 0], xy[:, 1]
    w = hinv[2, 0] * x + hinv[2, 1] * y + hinv[2, 2]
    ox = (hinv[0, 0] * x + hinv[0, 1] * y + hinv[0, 2]) / w
    oy = (hinv[1, 0] * x + hinv[1, 1] * y + hinv[1, 2]) / w

    j00 = (hinv[0, 0] - ox * hinv[2, 0]) / w
    j01 = (hinv[0, 1] - ox * hinv[2, 1]) / w
    j10 = (hinv[1, 0] - oy * hinv[2, 0]) / w
    j11 = (hinv[1, 1] - oy * hinv[2, 1]) / w
    detj = np.abs(j00 * j11 - j01 * j10)

    new_scale = np.asarray(scale, dtype=np.float64).copy()
    new_orient = np.asarray(orientation, dtype=np.float64).copy()
    if transport:
        new_scale = new_scale * np.sqrt(detj)
        vx = np.cos(new_orient)
        vy = np.sin(new_orient)
        new_orient = np.arctan2(j10 * vx + j11 * vy, j00 * vx + j01 * vy)

    iw, ih = image_size
    keep = (ox >= 0) & (ox <= iw - 1) & (oy >= 0) & (oy <= ih - 1) & (w != 0)
    return np.stack([ox, oy], axis=1), new_scale, new_orient, keep


def rectify_image(
    image,
    depth: DepthMap,
    K: Intrinsics,
    config: RunConfig = None,
    ground_axis=None,
) -> RectifiedSet:
    """Full rectification pipeline for one image.

    When ground_axis is given (camera-frame unit vector), only patches whose
    refined normal lies within config.ground_axis_deg of that axis (up to
    sign) are rectified. Zero patches is a valid outcome; everything then
    lands in the non-planar mask.
    """
    config = config or RunConfig()
    h, w = depth.shape
    if image.shape != (h, w) or (w, h) != (K.width, K.height):
        raise ValueError("image, depth and intrinsics dimensions disagree")

    depth = smooth_depth(depth, config.depth_smooth_sigma)
    points = backproject_map(depth, K)
    normals = estimate_normals(points, K, window=config.normal_window)

    if config.clustering_mode == "orthogonal":
        _, labels = cluster_normals_orthogonal(
            normals,
            theta_assign=config.theta_assign,
            stride=config.cluster_stride,
        )
    else:
        _, labels = cluster_normals_histogram(
            normals,
            bins=config.histogram_bins,
            threshold_frac=config.histogram_threshold_frac,
            nms_radius=config.histogram_nms_deg,
            theta_assign=config.theta_assign,
        )

    min_pixels = max(int(config.min_patch_frac * h * w), 1)
    patches = connected_components(labels, min_pixels)

    cos_ground = np.cos(np.radians(config.ground_axis_deg))
    rectified = []
    covered = np.zeros((h, w), dtype=bool)
    for patch in patches:
        try:
            normal = refine_patch_normal(patch.mask, normals, K)
        except ValueError:
            continue
        if ground_axis is not None:
            if abs(float(normal @ ground_axis)) < cos_ground:
                continue
        trimmed = glancing_mask(patch.mask, normal, K, theta_max=config.theta_max)
        if trimmed is None or trimmed.sum() < min_pixels:
            continue
        try:
            rot = rectifying_rotation(normal)
            H, dims, s = rectifying_homography(
                K, rot, trimmed, max_output_dim=config.max_output_dim
            )
            raster, valid = warp_patch(image, H, dims, trimmed)
        except DegenerateGeometryError:
            continue
        refined = PlanarPatch(
            mask=patch.mask,
            normal=normal,
            pixel_count=patch.pixel_count,
            axis_label=patch.axis_label,
        )
        rectified.append(
            RectifiedPatch(
                patch=refined,
                trimmed_mask=trimmed,
                H=H,
                width=dims[0],
                height=dims[1],
                scale=s,
                image=raster,
                valid=valid,
            )
        )
        covered |= trimmed

    return RectifiedSet(patches=rectified, nonplanar_mask=~covered)
