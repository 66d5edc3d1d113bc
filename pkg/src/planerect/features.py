"""Local feature extraction.

The built-in "reference" extractor is a deterministic multi-scale Harris
detector with dominant-gradient orientation and a 16x16 mean-free,
L2-normalized intensity-patch descriptor (256-d float32). It stands in for
external detectors behind the same interface; register alternatives with
register_extractor.
"""

import struct
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .rectify import RectifiedSet, backwarp_keypoints

NONPLANAR = -1

HARRIS_K = 0.04
N_OCTAVES = 4
BASE_SCALE = 1.0
SUPPORT_RADIUS = 16.0
DESC_SIZE = 16  # descriptor grid is DESC_SIZE x DESC_SIZE


@dataclass
class FeatureSet:
    xy: np.ndarray            # (N, 2) float64, raster coordinates
    scale: np.ndarray         # (N,) float64, pixels
    orientation: np.ndarray   # (N,) float64, radians
    score: np.ndarray         # (N,) float64
    descriptors: np.ndarray   # (N, D) float32, or uint8 when desc_type=="bits"
    provenance: np.ndarray    # (N,) int32; patch index or NONPLANAR
    desc_type: str = "float32"

    def __len__(self):
        return len(self.xy)

    @classmethod
    def empty(cls, desc_len=DESC_SIZE * DESC_SIZE, desc_type="float32"):
        dt = np.float32 if desc_type == "float32" else np.uint8
        return cls(
            xy=np.zeros((0, 2)),
            scale=np.zeros(0),
            orientation=np.zeros(0),
            score=np.zeros(0),
            descriptors=np.zeros((0, desc_len), dtype=dt),
            provenance=np.zeros(0, dtype=np.int32),
            desc_type=desc_type,
        )

    def select(self, idx):
        return FeatureSet(
            xy=self.xy[idx],
            scale=self.scale[idx],
            orientation=self.orientation[idx],
            score=self.score[idx],
            descriptors=self.descriptors[idx],
            provenance=self.provenance[idx],
            desc_type=self.desc_type,
        )


def concat_feature_sets(sets):
    sets = [s for s in sets if s is not None]
    if not sets:
        return FeatureSet.empty()
    base = sets[0]
    for s in sets[1:]:
        if s.desc_type != base.desc_type or s.descriptors.shape[1] != base.descriptors.shape[1]:
            raise ValueError("feature sets have incompatible descriptors")
    return FeatureSet(
        xy=np.concatenate([s.xy for s in sets]),
        scale=np.concatenate([s.scale for s in sets]),
        orientation=np.concatenate([s.orientation for s in sets]),
        score=np.concatenate([s.score for s in sets]),
        descriptors=np.concatenate([s.descriptors for s in sets]),
        provenance=np.concatenate([s.provenance for s in sets]),
        desc_type=base.desc_type,
    )


def _bilinear_sample(img, xs, ys):
    h, w = img.shape
    x0 = np.clip(np.floor(xs).astype(np.int64), 0, w - 2)
    y0 = np.clip(np.floor(ys).astype(np.int64), 0, h - 2)
    fx = np.clip(xs - x0, 0.0, 1.0)
    fy = np.clip(ys - y0, 0.0, 1.0)
    return (
        img[y0, x0] * (1 - fx) * (1 - fy)
        + img[y0, x0 + 1] * fx * (1 - fy)
        + img[y0 + 1, x0] * (1 - fx) * fy
        + img[y0 + 1, x0 + 1] * fx * fy
    )


def _subpixel_1d(rm, r0, rp):
    """Parabolic peak offset in [-0.5, 0.5]; vectorized over arrays."""
    rm = np.asarray(rm, dtype=np.float64)
    denom = rm - 2 * np.asarray(r0, dtype=np.float64) + rp
    with np.errstate(divide="ignore", invalid="ignore"):
        off = 0.5 * (rm - rp) / denom
    off = np.where(np.abs(denom) < 1e-12, 0.0, off)
    return np.clip(off, -0.5, 0.5)


def _dominant_orientations(gx, gy, xs, ys, radius=8):
    """Peaks of Gaussian-weighted gradient-orientation histograms, batched
    over keypoints (36 bins, circular smoothing, parabolic refinement)."""
    h, w = gx.shape
    n = len(xs)
    off = np.arange(-radius, radius + 1)
    xi = np.round(xs).astype(np.int64)
    yi = np.round(ys).astype(np.int64)
    X = xi[:, None, None] + off[None, None, :]
    Y = yi[:, None, None] + off[None, :, None]
    inb = (X >= 0) & (X < w) & (Y >= 0) & (Y < h)
    Xc = np.clip(X, 0, w - 1)
    Yc = np.clip(Y, 0, h - 1)
    sgx = gx[Yc, Xc]
    sgy = gy[Yc, Xc]
    dx = X - xs[:, None, None]
    dy = Y - ys[:, None, None]
    weight = np.exp(-(dx * dx + dy * dy) / (2 * (0.5 * radius) ** 2)) * inb
    mag = np.hypot(sgx, sgy) * weight
    ang = np.arctan2(sgy, sgx)
    bins = 36
    idx = np.floor((ang + np.pi) / (2 * np.pi) * bins).astype(np.int64) % bins
    flat = idx + bins * np.arange(n)[:, None, None]
    hist = np.bincount(flat.ravel(), weights=mag.ravel(), minlength=n * bins)
    hist = hist.reshape(n, bins)
    # small circular smoothing stabilizes the peak
    hist = (np.roll(hist, 1, axis=1) + hist + np.roll(hist, -1, axis=1)) / 3.0
    p = np.argmax(hist, axis=1)
    rows = np.arange(n)
    frac = _subpixel_1d(
        hist[rows, (p - 1) % bins], hist[rows, p], hist[rows, (p + 1) % bins]
    )
    return (p + 0.5 + frac) / bins * 2 * np.pi - np.pi


def _describe_batch(img, xs, ys, scale_px, orientations):
    """16x16 oriented intensity patches, mean-subtracted and L2-normalized,
    batched over keypoints. Returns (descriptors, valid mask)."""
    g = np.arange(DESC_SIZE, dtype=np.float64) - (DESC_SIZE - 1) / 2.0
    gxs, gys = np.meshgrid(g, g)
    gxs = gxs.ravel()[None, :]
    gys = gys.ravel()[None, :]
    c = np.cos(orientations)[:, None]
    s = np.sin(orientations)[:, None]
    h, w = img.shape
    # the rotated grid extent is exactly (|c|+|s|) * (DESC_SIZE-1)/2 per
    # axis, so border validity is known without building the sample grid
    r = scale_px * (np.abs(c) + np.abs(s))[:, 0] * (DESC_SIZE - 1) / 2.0
    valid = (xs - r >= 0) & (ys - r >= 0) & (xs + r <= w - 1) & (ys + r <= h - 1)
    desc = np.zeros((len(xs), DESC_SIZE * DESC_SIZE), dtype=np.float32)
    sel = np.nonzero(valid)[0]
    if len(sel) == 0:
        return desc, valid
    sx = xs[sel, None] + scale_px * (c[sel] * gxs - s[sel] * gys)
    sy = ys[sel, None] + scale_px * (s[sel] * gxs + c[sel] * gys)
    patch = _bilinear_sample(img, sx, sy)
    patch = patch - patch.mean(axis=1, keepdims=True)
    norms = np.linalg.norm(patch, axis=1)
    valid[sel] &= norms > 1e-9
    desc[sel] = patch / np.maximum(norms[:, None], 1e-12)
    return desc, valid


def reference_extract(image, max_features=1500, response_frac=0.005):
    """Deterministic multi-scale Harris corners with patch descriptors."""
    image = np.asarray(image, dtype=np.float64)
    if min(image.shape) < 3:
        return FeatureSet.empty()
    pyramid = [ndimage.gaussian_filter(image, 1.0)]
    for _ in range(N_OCTAVES - 1):
        if min(pyramid[-1].shape) < 6:
            break
        pyramid.append(ndimage.gaussian_filter(pyramid[-1], 1.0)[::2, ::2])

    grads = []
    responses = []
    for img in pyramid:
        gy, gx = np.gradient(img)
        a = ndimage.gaussian_filter(gx * gx, 1.5)
        b = ndimage.gaussian_filter(gy * gy, 1.5)
        c = ndimage.gaussian_filter(gx * gy, 1.5)
        r = a * b - c * c - HARRIS_K * (a + b) ** 2
        grads.append((gx, gy))
        responses.append(r)

    if max((r.max() for r in responses), default=0.0) <= 0:
        return FeatureSet.empty()

    # 3x3 non-max suppression per scale level; a location may fire at
    # several scales (self-similar structure legitimately exists at both)
    candidates = []  # (score, octave, y, x) for deterministic ordering
    for o, r in enumerate(responses):
        if r.shape[0] < 3 or r.shape[1] < 3 or r.max() <= 0:
            continue
        thr = response_frac * r.max()
        local_max = r == ndimage.maximum_filter(r, size=3, mode="nearest")
        ys, xs = np.nonzero(local_max & (r > thr))
        # a descriptor grid spans at least +/- (DESC_SIZE-1)/2 px, so
        # candidates closer than that to the border can never be described;
        # the margin accounts for the +/- 0.5 px subpixel refinement
        m = int((DESC_SIZE - 1) / 2.0 - 0.5)
        inner = (ys >= m) & (ys <= r.shape[0] - 1 - m) & (xs >= m) & (xs <= r.shape[1] - 1 - m)
        for y, x in zip(ys[inner], xs[inner]):
            candidates.append((float(r[y, x]), o, int(y), int(x)))

    candidates.sort(key=lambda t: (-t[0], t[1], t[2], t[3]))
    candidates = candidates[: 2 * max_features]
    if not candidates:
        return FeatureSet.empty()

    scores = np.array([c[0] for c in candidates])
    octs = np.array([c[1] for c in candidates])
    yx = np.array([(c[2], c[3]) for c in candidates], dtype=np.int64)

    fxy = np.zeros((len(candidates), 2))
    theta = np.zeros(len(candidates))
    desc = np.zeros((len(candidates), DESC_SIZE * DESC_SIZE), dtype=np.float32)
    ok = np.zeros(len(candidates), dtype=bool)
    for o in range(len(pyramid)):
        sel = np.nonzero(octs == o)[0]
        if len(sel) == 0:
            continue
        r = responses[o]
        ys, xs = yx[sel, 0], yx[sel, 1]
        fx = xs + _subpixel_1d(r[ys, xs - 1], r[ys, xs], r[ys, xs + 1])
        fy = ys + _subpixel_1d(r[ys - 1, xs], r[ys, xs], r[ys + 1, xs])
        gx, gy = grads[o]
        th = _dominant_orientations(gx, gy, fx, fy)
        d, valid = _describe_batch(pyramid[o], fx, fy, 1.0, th)
        fxy[sel, 0], fxy[sel, 1] = fx, fy
        theta[sel] = th
        desc[sel] = d
        ok[sel] = valid

    keep = np.nonzero(ok)[0][:max_features]
    if len(keep) == 0:
        return FeatureSet.empty()
    factor = 2.0 ** octs[keep]
    return FeatureSet(
        xy=fxy[keep] * factor[:, None],
        scale=BASE_SCALE * factor,
        orientation=theta[keep],
        score=scores[keep],
        descriptors=desc[keep],
        provenance=np.full(len(keep), NONPLANAR, dtype=np.int32),
        desc_type="float32",
    )


_EXTRACTORS = {"reference": reference_extract}


def register_extractor(name, fn):
    _EXTRACTORS[name] = fn


def detect_and_describe(image, mask=None, extractor="reference", **params):
    """Run an extractor and enforce the mask/border discard rule.

    A keypoint is kept only if its descriptor support square (half-side
    SUPPORT_RADIUS * scale) stays inside the raster, and its center plus the
    support corners fall on masked pixels.
    """
    if extractor not in _EXTRACTORS:
        raise ValueError(f"unknown extractor {extractor!r}")
    image = np.asarray(image, dtype=np.float64)
    if mask is not None and mask.shape != image.shape:
        raise ValueError("mask dimensions must match the image")
    fs = _EXTRACTORS[extractor](image, **params)
    if len(fs) == 0:
        return fs
    h, w = image.shape
    half = SUPPORT_RADIUS * fs.scale
    x, y = fs.xy[:, 0], fs.xy[:, 1]
    keep = (x - half >= 0) & (y - half >= 0) & (x + half <= w - 1) & (y + half <= h - 1)
    if mask is not None:
        xi = np.clip(np.round(x).astype(np.int64), 0, w - 1)
        yi = np.clip(np.round(y).astype(np.int64), 0, h - 1)
        keep &= mask[yi, xi]
        for sx in (-1.0, 1.0):
            for sy in (-1.0, 1.0):
                cx = np.clip(np.round(x + sx * half).astype(np.int64), 0, w - 1)
                cy = np.clip(np.round(y + sy * half).astype(np.int64), 0, h - 1)
                keep &= mask[cy, cx]
    return fs.select(keep)


def extract_rectified_features(
    image, rset: RectifiedSet, extractor="reference", transport=True, **params
):
    """Features from every rectified patch (back-warped into the original
    frame) plus plain features from the non-planar remainder."""
    image = np.asarray(image, dtype=np.float64)
    h, w = image.shape
    parts = []
    for idx, rp in enumerate(rset.patches):
        fs = detect_and_describe(rp.image, rp.valid, extractor=extractor, **params)
        if len(fs) == 0:
            continue
        xy, scale, orient, keep = backwarp_keypoints(
            fs.xy, fs.scale, fs.orientation, rp.H, (w, h), transport=transport
        )
        col = np.clip(np.round(xy[:, 0]).astype(np.int64), 0, w - 1)
        row = np.clip(np.round(xy[:, 1]).astype(np.int64), 0, h - 1)
        keep &= rp.trimmed_mask[row, col]
        fs = FeatureSet(
            xy=xy,
            scale=scale,
            orientation=orient,
            score=fs.score,
            descriptors=fs.descriptors,
            provenance=np.full(len(fs), idx, dtype=np.int32),
            desc_type=fs.desc_type,
        ).select(keep)
        parts.append(fs)

    plain = detect_and_describe(
        image, rset.nonplanar_mask, extractor=extractor, **params
    )
    parts.append(plain)
    return concat_feature_sets(parts)


MAGIC = b"PRFT"
VERSION = 1


def save_features(fs: FeatureSet, path):
    """Little-endian binary serialization (PRFT format)."""
    desc_type = 0 if fs.desc_type == "float32" else 1
    desc_len = fs.descriptors.shape[1]
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<IIIB", VERSION, len(fs), desc_len, desc_type))
        per = np.empty((len(fs), 6), dtype="<f4")
        per[:, 0:2] = fs.xy
        per[:, 2] = fs.scale
        per[:, 3] = fs.orientation
        per[:, 4] = fs.score
        prov = fs.provenance.astype("<i4")
        per_bytes = per.view("<u4").copy()
        per_bytes[:, 5] = prov.view("<u4")
        f.write(per_bytes.tobytes())
        dt = "<f4" if desc_type == 0 else "u1"
        f.write(np.ascontiguousarray(fs.descriptors, dtype=dt).tobytes())


def load_features(path) -> FeatureSet:
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != MAGIC:
            raise ValueError("not a PRFT feature file")
        version, count, desc_len, desc_type = struct.unpack("<IIIB", f.read(13))
        if version != VERSION:
            raise ValueError(f"unsupported PRFT version {version}")
        raw = np.frombuffer(f.read(count * 24), dtype="<u4").reshape(count, 6)
        per = raw[:, :5].view("<f4")
        prov = raw[:, 5].copy().view("<i4")
        dt = np.dtype("<f4") if desc_type == 0 else np.dtype("u1")
        desc = np.frombuffer(f.read(count * desc_len * dt.itemsize), dtype=dt)
        desc = desc.reshape(count, desc_len).copy()
    return FeatureSet(
        xy=per[:, 0:2].astype(np.float64),
        scale=per[:, 2].astype(np.float64),
        orientation=per[:, 3].astype(np.float64),
        score=per[:, 4].astype(np.float64),
        descriptors=desc if desc_type else desc.astype(np.float32),
        provenance=prov.astype(np.int32),
        desc_type="float32" if desc_type == 0 else "bits",
    )
