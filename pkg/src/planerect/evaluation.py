"""Pairwise pose-evaluation campaigns, re-localization, and reporting.

A campaign consumes a JSONL manifest of image pairs with ground-truth
relative poses, runs the matching pipeline in `rectified` or `plain` mode,
and aggregates per-difficulty-bin localization rates (success = estimated
relative rotation within `success_deg` of ground truth).
"""

from __future__ import annotations

import json
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import imio
from .camera import DepthMap, Intrinsics
from .config import RunConfig
from .errors import (
    AmbiguousPoseError,
    DegenerateGeometryError,
    InsufficientMatchesError,
    ManifestError,
    PlanerectError,
)
from .estimation import (
    decompose_homography,
    estimate_essential_ransac,
    estimate_fundamental_ransac,
    estimate_homography_ransac,
    match_descriptors,
    recover_pose,
    rotation_error_deg,
    RelativePose,
)
from .features import detect_and_describe, extract_rectified_features
from .rectify import rectify_image
from .rotutil import rot_from_quat, rotation_angle_deg

N_BINS = 18

# fraction of the essential-matrix inlier count that the homography model
# must reach for the scene to be treated as planar (pose then comes from
# homography decomposition; the eight-point solution is degenerate there)
PLANAR_INLIER_RATIO = 0.7


@dataclass(frozen=True)
class PairManifestEntry:
    """One image pair with ground-truth relative pose (a -> b)."""

    img_a: str
    img_b: str
    depth_a: str
    depth_b: str
    K_a: Intrinsics
    K_b: Intrinsics
    q_ab: np.ndarray  # unit quaternion [w, x, y, z]
    t_ab: np.ndarray  # translation direction
    scene: str
    depth_scale: float = None  # required only for PNG depth

    @property
    def R_ab(self):
        return rot_from_quat(self.q_ab)


@dataclass(frozen=True)
class PairResult:
    pair_id: int
    scene: str
    mode: str
    bin: int
    n_matches: int
    n_inliers: int
    pose: RelativePose = None
    rot_err_deg: float = None
    success: bool = False
    stage: str = "ok"


@dataclass(frozen=True)
class BinRates:
    """Per-difficulty-bin pair counts and localization rates for one mode."""

    mode: str
    counts: np.ndarray
    localized: np.ndarray

    @property
    def rates(self):
        """Rate per bin; NaN marks empty bins (no pairs, not zero rate)."""
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(
                self.counts > 0, self.localized / np.maximum(self.counts, 1), np.nan
            )

    @property
    def empty(self):
        return self.counts == 0


def difficulty_bin(rotation) -> int:
    """Bin k such that the rotation magnitude lies in [10k, 10(k+1)) degrees,
    clamped to 17."""
    angle = rotation_angle_deg(np.asarray(rotation, dtype=np.float64))
    # reconstructing the angle through arccos can land a hair below an exact
    # boundary (10 deg -> 9.999...8); nudge so boundaries stay left-closed
    return min(int((angle + 1e-9) // 10.0), N_BINS - 1)


_MANIFEST_KEYS = ("img_a", "img_b", "depth_a", "depth_b", "K_a", "K_b", "q_ab", "t_ab", "scene")


def load_manifest(path):
    """Parse a JSONL pair manifest, validating files and quaternions.

    Raises ManifestError naming the offending line; an empty manifest is
    valid but warns.
    """
    base = os.path.dirname(os.path.abspath(path))
    entries = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ManifestError(f"{path}:{lineno}: invalid JSON ({exc})") from exc
            missing = [k for k in _MANIFEST_KEYS if k not in obj]
            if missing:
                raise ManifestError(f"{path}:{lineno}: missing keys {missing}")
            q = np.asarray(obj["q_ab"], dtype=np.float64)
            if q.shape != (4,) or abs(np.linalg.norm(q) - 1.0) > 1e-6:
                raise ManifestError(
                    f"{path}:{lineno}: q_ab is not a unit quaternion"
                )
            t = np.asarray(obj["t_ab"], dtype=np.float64)
            if t.shape != (3,):
                raise ManifestError(f"{path}:{lineno}: t_ab must have 3 components")
            paths = {}
            for key in ("img_a", "img_b", "depth_a", "depth_b"):
                p = obj[key]
                if not os.path.isabs(p):
                    p = os.path.join(base, p)
                if not os.path.isfile(p):
                    raise ManifestError(f"{path}:{lineno}: missing file {obj[key]!r}")
                paths[key] = p
            try:
                K_a = Intrinsics.from_dict(obj["K_a"])
                K_b = Intrinsics.from_dict(obj["K_b"])
            except (KeyError, TypeError, ValueError) as exc:
                raise ManifestError(f"{path}:{lineno}: bad intrinsics ({exc})") from exc
            entries.append(
                PairManifestEntry(
                    img_a=paths["img_a"], img_b=paths["img_b"],
                    depth_a=paths["depth_a"], depth_b=paths["depth_b"],
                    K_a=K_a, K_b=K_b, q_ab=q, t_ab=t,
                    scene=str(obj["scene"]),
                    depth_scale=obj.get("depth_scale"),
                )
            )
    if not entries:
        warnings.warn(f"manifest {path} contains no entries")
    return entries


def _depth_at(depth: DepthMap, xy):
    """Nearest-pixel depth lookup for keypoint coordinates (NaN if invalid)."""
    h, w = depth.shape
    col = np.clip(np.round(xy[:, 0]).astype(int), 0, w - 1)
    row = np.clip(np.round(xy[:, 1]).astype(int), 0, h - 1)
    d = depth.depth[row, col].astype(np.float64)
    d[~depth.valid[row, col]] = np.nan
    return d


def _extract(image, depth, K, mode, config):
    if mode == "rectified":
        rset = rectify_image(image, depth, K, config)
        return extract_rectified_features(
            image, rset,
            extractor=config.extractor,
            transport=config.keypoint_jacobian_transport,
            max_features=config.max_features,
        )
    return detect_and_describe(
        image, extractor=config.extractor, max_features=config.max_features
    )


def _estimate_pair_pose(src, dst, depth_a, K_a, K_b, config, seeds):
    """Relative pose from matched pixel coordinates.

    Runs both the essential-matrix route and the homography route; when the
    homography explains nearly as many correspondences as the epipolar model
    the scene is planar and the eight-point solution is unreliable, so the
    pose comes from homography decomposition (depth breaks its two-fold
    ambiguity).
    """
    pose_e, inl_e = None, np.zeros(0, dtype=int)
    if len(src) >= 8:
        try:
            E, inl_e = estimate_essential_ransac(
                src, dst, K_a, K_b,
                sampson_px=config.sampson_px, seed=int(seeds[0]),
            )
            pose_e = recover_pose(E, src[inl_e], dst[inl_e], K_a, K_b)
        except (DegenerateGeometryError, AmbiguousPoseError, InsufficientMatchesError):
            pose_e = None

    pose_h, inl_h = None, np.zeros(0, dtype=int)
    if len(src) >= 4:
        try:
            H, inl_h = estimate_homography_ransac(
                src, dst,
                inlier_px=config.homography_inlier_px, seed=int(seeds[1]),
            )
            d = _depth_at(depth_a, src[inl_h])
            d = np.where(np.isfinite(d), d, np.nanmedian(d))
            pose_h, _ = decompose_homography(
                H, K_a, K_b, src[inl_h], dst[inl_h], depth=d
            )
        except (DegenerateGeometryError, AmbiguousPoseError, InsufficientMatchesError):
            pose_h = None

    if pose_e is not None and (
        pose_h is None or len(inl_h) < PLANAR_INLIER_RATIO * len(inl_e)
    ):
        return pose_e, len(inl_e)
    if pose_h is not None:
        return pose_h, len(inl_h)
    return None, 0


def _evaluate_one(entry, pair_id, mode, config, seed):
    gt_R = entry.R_ab
    k = difficulty_bin(gt_R)

    def fail(stage, n_matches=0, n_inliers=0):
        return PairResult(
            pair_id=pair_id, scene=entry.scene, mode=mode, bin=k,
            n_matches=n_matches, n_inliers=n_inliers, stage=stage,
        )

    try:
        img_a = imio.read_image(entry.img_a)
        img_b = imio.read_image(entry.img_b)
        depth_a = imio.read_depth(entry.depth_a, scale=entry.depth_scale)
        depth_b = imio.read_depth(entry.depth_b, scale=entry.depth_scale)
    except (OSError, PlanerectError, ValueError):
        return fail("load")

    try:
        fs_a = _extract(img_a, depth_a, entry.K_a, mode, config)
        fs_b = _extract(img_b, depth_b, entry.K_b, mode, config)
    except PlanerectError:
        return fail("features")

    try:
        m = match_descriptors(fs_a, fs_b, ratio=config.ratio)
    except ValueError:
        return fail("match")
    if len(m.idx_a) < 4:
        return fail("match", n_matches=len(m.idx_a))

    seeds = np.random.SeedSequence([seed, pair_id]).generate_state(2)
    pose, n_inl = _estimate_pair_pose(
        fs_a.xy[m.idx_a], fs_b.xy[m.idx_b], depth_a,
        entry.K_a, entry.K_b, config, seeds,
    )
    if pose is None:
        return fail("pose", n_matches=len(m.idx_a))

    err = rotation_error_deg(pose.R, gt_R)
    return PairResult(
        pair_id=pair_id, scene=entry.scene, mode=mode, bin=k,
        n_matches=len(m.idx_a), n_inliers=n_inl,
        pose=pose, rot_err_deg=err, success=err < config.success_deg,
    )


def evaluate_pairs(entries, config: RunConfig = None, mode="rectified", seed=None):
    """Evaluate every manifest pair; per-pair failures are recorded, never
    raised. Results follow manifest order."""
    if mode not in ("rectified", "plain"):
        raise ValueError(f"unknown mode {mode!r}")
    config = config or RunConfig()
    if seed is None:
        seed = config.seed
    if config.threads > 1 and len(entries) > 1:
        # per-pair seeds are derived from (seed, pair index), so the result
        # list is identical to the sequential one regardless of scheduling
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            return list(
                pool.map(
                    lambda item: _evaluate_one(item[1], item[0], mode, config, seed),
                    enumerate(entries),
                )
            )
    return [
        _evaluate_one(entry, i, mode, config, seed)
        for i, entry in enumerate(entries)
    ]


def localization_rates(results):
    """Aggregate PairResults into per-mode BinRates."""
    modes = sorted({r.mode for r in results})
    out = {}
    for mode in modes:
        counts = np.zeros(N_BINS, dtype=np.int64)
        localized = np.zeros(N_BINS, dtype=np.int64)
        for r in results:
            if r.mode != mode:
                continue
            counts[r.bin] += 1
            localized[r.bin] += int(r.success)
        out[mode] = BinRates(mode=mode, counts=counts, localized=localized)
    return out


# ---------------------------------------------------------------------------
# re-localization


@dataclass(frozen=True)
class View:
    """One calibrated view for re-localization campaigns.

    ground_axis, when set, is the camera-frame direction of the shared
    ground normal; homography mode then rectifies only ground patches.
    """

    image: np.ndarray
    depth: DepthMap
    K: Intrinsics
    ground_axis: np.ndarray = None


@dataclass(frozen=True)
class RelocResult:
    """Database ranking for one query (best first) plus per-database-id
    inlier counts."""

    ranking: np.ndarray
    inliers: np.ndarray

    @property
    def top1(self):
        return int(self.ranking[0])


def _reloc_features(view: View, mode, config):
    if mode == "homography":
        rset = rectify_image(
            view.image, view.depth, view.K, config, ground_axis=view.ground_axis
        )
        return extract_rectified_features(
            view.image, rset,
            extractor=config.extractor,
            transport=config.keypoint_jacobian_transport,
            max_features=config.max_features,
        )
    return detect_and_describe(
        view.image, extractor=config.extractor, max_features=config.max_features
    )


def relocalize(queries, database, mode="homography", config: RunConfig = None, seed=None):
    """Rank every database view per query by robust-model inlier count.

    homography mode rectifies (optionally ground-only) and scores homography
    inliers; fundamental mode matches plain features and scores fundamental-
    matrix inliers. Ties break toward the lower database id.
    """
    if mode not in ("homography", "fundamental"):
        raise ValueError(f"unknown mode {mode!r}")
    if not queries or not database:
        raise ValueError("queries and database must be nonempty")
    config = config or RunConfig()
    if seed is None:
        seed = config.seed

    fs_q = [_reloc_features(v, mode, config) for v in queries]
    fs_db = [_reloc_features(v, mode, config) for v in database]

    results = []
    for qi, fq in enumerate(fs_q):
        inliers = np.zeros(len(database), dtype=np.int64)
        for di, fd in enumerate(fs_db):
            rs = int(np.random.SeedSequence([seed, qi, di]).generate_state(1)[0])
            try:
                m = match_descriptors(fq, fd, ratio=config.ratio)
            except ValueError:
                continue
            src, dst = fq.xy[m.idx_a], fd.xy[m.idx_b]
            try:
                if mode == "homography":
                    _, inl = estimate_homography_ransac(
                        src, dst, inlier_px=config.homography_inlier_px, seed=rs
                    )
                else:
                    _, inl = estimate_fundamental_ransac(src, dst, seed=rs)
            except (InsufficientMatchesError, DegenerateGeometryError):
                continue
            inliers[di] = len(inl)
        order = np.lexsort((np.arange(len(database)), -inliers))
        results.append(RelocResult(ranking=order, inliers=inliers))
    return results


# ---------------------------------------------------------------------------
# reporting

_PAIR_COLUMNS = (
    "pair_id", "scene", "mode", "bin", "n_matches", "n_inliers",
    "rot_err_deg", "success", "stage",
)


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return f"{value:.6f}"
    return str(value)


def emit_report(results, rates, out_dir):
    """Write pairs.csv, rates.csv and a standalone rates.svg into out_dir."""
    os.makedirs(out_dir, exist_ok=True)
    pairs_path = os.path.join(out_dir, "pairs.csv")
    with open(pairs_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(_PAIR_COLUMNS) + "\n")
        for r in results:
            row = (
                r.pair_id, r.scene, r.mode, r.bin, r.n_matches, r.n_inliers,
                r.rot_err_deg, r.success, r.stage,
            )
            fh.write(",".join(_fmt(v) for v in row) + "\n")

    rates_path = os.path.join(out_dir, "rates.csv")
    with open(rates_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("mode,bin,count,localized,rate\n")
        for mode in sorted(rates):
            br = rates[mode]
            for k in range(N_BINS):
                rate = "" if br.counts[k] == 0 else f"{br.rates[k]:.6f}"
                fh.write(f"{mode},{k},{br.counts[k]},{br.localized[k]},{rate}\n")

    svg_path = os.path.join(out_dir, "rates.svg")
    with open(svg_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(_rates_svg(rates))
    return pairs_path, rates_path, svg_path


_SVG_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b")


def _rates_svg(rates, width=640, height=420):
    """Standalone SVG: one polyline per mode, x = bin, y = rate."""
    ml, mr, mt, mb = 55, 20, 20, 45
    pw, ph = width - ml - mr, height - mt - mb

    def px(k):
        return ml + pw * k / (N_BINS - 1)

    def py(rate):
        return mt + ph * (1.0 - rate)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" '
        'stroke="black"/>',
    ]
    for k in range(N_BINS):
        x = px(k)
        parts.append(
            f'<line x1="{x:.1f}" y1="{mt + ph}" x2="{x:.1f}" '
            f'y2="{mt + ph + 4}" stroke="black"/>'
        )
        parts.append(
            f'<text x="{x:.1f}" y="{mt + ph + 16}" font-size="10" '
            f'text-anchor="middle">{k}</text>'
        )
    for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
        y = py(frac)
        parts.append(
            f'<line x1="{ml - 4}" y1="{y:.1f}" x2="{ml}" y2="{y:.1f}" '
            'stroke="black"/>'
        )
        parts.append(
            f'<text x="{ml - 8}" y="{y + 3:.1f}" font-size="10" '
            f'text-anchor="end">{frac:g}</text>'
        )
    parts.append(
        f'<text x="{ml + pw / 2:.1f}" y="{height - 8}" font-size="12" '
        'text-anchor="middle">difficulty bin</text>'
    )
    parts.append(
        f'<text x="14" y="{mt + ph / 2:.1f}" font-size="12" '
        f'text-anchor="middle" transform="rotate(-90 14 {mt + ph / 2:.1f})">'
        "localization rate</text>"
    )
    for i, mode in enumerate(sorted(rates)):
        br = rates[mode]
        color = _SVG_COLORS[i % len(_SVG_COLORS)]
        pts = [
            f"{px(k):.1f},{py(br.rates[k]):.1f}"
            for k in range(N_BINS)
            if br.counts[k] > 0
        ]
        if pts:
            parts.append(
                f'<polyline points="{" ".join(pts)}" fill="none" '
                f'stroke="{color}" stroke-width="2"/>'
            )
        ly = mt + 14 + 16 * i
        parts.append(
            f'<line x1="{ml + 10}" y1="{ly - 4}" x2="{ml + 34}" y2="{ly - 4}" '
            f'stroke="{color}" stroke-width="2"/>'
        )
        parts.append(f'<text x="{ml + 40}" y="{ly}" font-size="11">{mode}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


# ---------------------------------------------------------------------------
# dataset writing


def write_dataset(cases, out_dir, noise_sigma=0.0, seed=0):
    """Render TwoViewCases to disk (PNG images, PFM depths, manifest.jsonl).

    Optional multiplicative Gaussian depth noise (sigma as a fraction of
    depth) is applied with per-pair derived seeds. Returns the manifest path.
    """
    from .rotutil import quat_from_rot
    from .synthetic import add_depth_noise

    os.makedirs(out_dir, exist_ok=True)
    manifest_path = os.path.join(out_dir, "manifest.jsonl")
    with open(manifest_path, "w", encoding="utf-8", newline="\n") as fh:
        for i, case in enumerate(cases):
            names = {}
            for which in ("a", "b"):
                image, depth, _ = case.render(which)
                if noise_sigma > 0:
                    rng = np.random.default_rng(
                        np.random.SeedSequence([seed, i, ord(which)])
                    )
                    depth = add_depth_noise(depth, noise_sigma, rng)
                img_name = f"pair{i:04d}_{which}.png"
                depth_name = f"pair{i:04d}_{which}.pfm"
                imio.write_image(os.path.join(out_dir, img_name), image)
                arr = np.where(depth.valid, depth.depth, 0.0)
                imio.write_pfm(os.path.join(out_dir, depth_name), arr)
                names[which] = (img_name, depth_name)
            entry = {
                "img_a": names["a"][0], "img_b": names["b"][0],
                "depth_a": names["a"][1], "depth_b": names["b"][1],
                "K_a": case.K_a.to_dict(), "K_b": case.K_b.to_dict(),
                "q_ab": [float(x) for x in quat_from_rot(case.R_ab)],
                "t_ab": [float(x) for x in case.t_ab],
                "scene": f"{case.layout or 'scene'}_{i:04d}",
            }
            fh.write(json.dumps(entry, sort_keys=True) + "\n")
    return manifest_path
