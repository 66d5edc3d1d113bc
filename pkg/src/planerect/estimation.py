"""Descriptor matching, robust model fitting, and relative-pose recovery."""

from dataclasses import dataclass

import numpy as np

from .errors import (
    AmbiguousPoseError,
    DegenerateGeometryError,
    InsufficientMatchesError,
)
from .rotutil import is_rotation


@dataclass(frozen=True)
class MatchSet:
    idx_a: np.ndarray      # (M,) indices into set A
    idx_b: np.ndarray      # (M,) indices into set B
    distance: np.ndarray   # (M,) descriptor distances

    def __len__(self):
        return len(self.idx_a)


@dataclass(frozen=True)
class RelativePose:
    R: np.ndarray  # 3x3 rotation
    t: np.ndarray  # unit translation direction

    def __post_init__(self):
        if not is_rotation(self.R, tol=1e-9):
            raise ValueError("R is not a rotation matrix")
        if abs(np.linalg.norm(self.t) - 1.0) > 1e-12:
            raise ValueError("t must be a unit vector")


def _pairwise_sq_dist(A, B):
    aa = np.einsum("ij,ij->i", A, A)[:, None]
    bb = np.einsum("ij,ij->i", B, B)[None, :]
    d2 = aa + bb - 2.0 * (A @ B.T)
    return np.maximum(d2, 0.0)


def _hamming_dist(A, B):
    # uint8 bit-packed descriptors
    bits_a = np.unpackbits(A, axis=1)
    bits_b = np.unpackbits(B, axis=1)
    return (bits_a[:, None, :] != bits_b[None, :, :]).sum(axis=2).astype(np.float64)


def match_descriptors(fs_a, fs_b, ratio: float = 0.8, mutual: bool = False) -> MatchSet:
    """Nearest-neighbor matching with Lowe's ratio test (d1/d2 < ratio)."""
    if fs_a.desc_type != fs_b.desc_type:
        raise ValueError("descriptor types differ between sets")
    if fs_a.descriptors.shape[1] != fs_b.descriptors.shape[1]:
        raise ValueError("descriptor lengths differ between sets")
    empty = MatchSet(
        idx_a=np.zeros(0, dtype=np.int64),
        idx_b=np.zeros(0, dtype=np.int64),
        distance=np.zeros(0),
    )
    if len(fs_a) == 0 or len(fs_b) < 2:
        return empty

    if fs_a.desc_type == "float32":
        d = np.sqrt(_pairwise_sq_dist(
            fs_a.descriptors.astype(np.float64), fs_b.descriptors.astype(np.float64)
        ))
    else:
        d = _hamming_dist(fs_a.descriptors, fs_b.descriptors)

    order = np.argsort(d, axis=1)
    nn1 = order[:, 0]
    d1 = d[np.arange(len(fs_a)), nn1]
    d2 = d[np.arange(len(fs_a)), order[:, 1]]
    with np.errstate(divide="ignore", invalid="ignore"):
        rt = np.where(d2 > 0, d1 / d2, 1.0)
    keep = rt < ratio
    if mutual:
        back = np.argmin(d, axis=0)
        keep &= back[nn1] == np.arange(len(fs_a))
    ia = np.nonzero(keep)[0]
    return MatchSet(idx_a=ia, idx_b=nn1[ia], distance=d1[ia])


def _hartley_normalize(pts):
    c = pts.mean(axis=0)
    d = np.sqrt(((pts - c) ** 2).sum(axis=1)).mean()
    if d < 1e-12:
        raise DegenerateGeometryError("points are coincident")
    s = np.sqrt(2.0) / d
    T = np.array([[s, 0, -s * c[0]], [0, s, -s * c[1]], [0, 0, 1]])
    return (pts - c) * s, T


def _collinear_triple_exists(pts, tol=1e-9):
    n = len(pts)
    scale = max(np.ptp(pts[:, 0]), np.ptp(pts[:, 1]), 1e-12)
    for i in range(n):
        for j in range(i + 1, n):
            for k in range(j + 1, n):
                area = np.cross(pts[j] - pts[i], pts[k] - pts[i])
                if abs(area) < tol * scale * scale:
                    return True
    return False


def dlt_homography(src, dst):
    """Normalized DLT from >= 4 correspondences (no 3 source points
    collinear for the minimal case)."""
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    if len(src) < 4 or len(src) != len(dst):
        raise InsufficientMatchesError("need at least 4 correspondences")
    if len(src) == 4 and _collinear_triple_exists(src):
        raise DegenerateGeometryError("3 of the 4 source points are collinear")
    ns, Ts = _hartley_normalize(src)
    nd, Td = _hartley_normalize(dst)
    n = len(ns)
    A = np.zeros((2 * n, 9))
    A[0::2, 0:2] = ns
    A[0::2, 2] = 1
    A[0::2, 6:8] = -ns * nd[:, 0:1]
    A[0::2, 8] = -nd[:, 0]
    A[1::2, 3:5] = ns
    A[1::2, 5] = 1
    A[1::2, 6:8] = -ns * nd[:, 1:2]
    A[1::2, 8] = -nd[:, 1]
    _, s, vt = np.linalg.svd(A)
    if s[-2] < 1e-10 * max(s[0], 1e-300):
        raise DegenerateGeometryError("homography system is rank deficient")
    Hn = vt[-1].reshape(3, 3)
    H = np.linalg.inv(Td) @ Hn @ Ts
    if abs(H[2, 2]) < 1e-12:
        raise DegenerateGeometryError("degenerate homography normalization")
    return H / H[2, 2]


def _sym_transfer_error(H, src, dst):
    def transfer(H, p):
        ph = np.column_stack([p, np.ones(len(p))]) @ H.T
        with np.errstate(divide="ignore", invalid="ignore"):
            out = ph[:, :2] / ph[:, 2:3]
        out[~np.isfinite(out).all(axis=1)] = 1e12
        return out

    e1 = np.linalg.norm(transfer(H, src) - dst, axis=1)
    if abs(np.linalg.det(H)) < 1e-12:
        return np.full(len(src), np.inf)
    e2 = np.linalg.norm(transfer(np.linalg.inv(H), dst) - src, axis=1)
    return e1 + e2


def _adaptive_iters(inlier_frac, sample_size, confidence, max_iters):
    eps = max(min(inlier_frac, 1.0 - 1e-12), 1e-12)
    w = eps**sample_size
    if w >= 1.0 - 1e-12:
        return 1
    n = np.log(1.0 - confidence) / np.log(1.0 - w)
    return int(min(max(np.ceil(n), 1), max_iters))


def _normalize_batch(pts):
    """Hartley normalization per sample. pts: (B, k, 2) -> (norm pts, T) with
    degenerate (coincident) samples flagged."""
    c = pts.mean(axis=1, keepdims=True)
    d = np.linalg.norm(pts - c, axis=2).mean(axis=1)
    bad = d < 1e-12
    s = np.sqrt(2.0) / np.maximum(d, 1e-300)
    out = (pts - c) * s[:, None, None]
    B = len(pts)
    T = np.zeros((B, 3, 3))
    T[:, 0, 0] = T[:, 1, 1] = s
    T[:, 0, 2] = -s * c[:, 0, 0]
    T[:, 1, 2] = -s * c[:, 0, 1]
    T[:, 2, 2] = 1.0
    return out, T, bad


def _dlt_homography_batch(src, dst):
    """Minimal 4-point DLT for a batch of samples. src, dst: (B, 4, 2).
    Returns (H, ok) with H[i] valid only where ok[i]."""
    B = len(src)
    ns, Ts, bad_s = _normalize_batch(src)
    nd, Td, bad_d = _normalize_batch(dst)
    ok = ~(bad_s | bad_d)
    # collinear triples within the source sample make the system degenerate
    scale = np.maximum(np.ptp(src, axis=1).max(axis=1), 1e-12)
    for i, j, k in ((0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)):
        u = src[:, j] - src[:, i]
        v = src[:, k] - src[:, i]
        area = u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0]
        ok &= np.abs(area) >= 1e-9 * scale * scale
    A = np.zeros((B, 8, 9))
    A[:, 0::2, 0:2] = ns
    A[:, 0::2, 2] = 1
    A[:, 0::2, 6:8] = -ns * nd[:, :, 0:1]
    A[:, 0::2, 8] = -nd[:, :, 0]
    A[:, 1::2, 3:5] = ns
    A[:, 1::2, 5] = 1
    A[:, 1::2, 6:8] = -ns * nd[:, :, 1:2]
    A[:, 1::2, 8] = -nd[:, :, 1]
    _, s, vt = np.linalg.svd(A)
    ok &= s[:, -2] >= 1e-10 * np.maximum(s[:, 0], 1e-300)
    Hn = vt[:, -1].reshape(B, 3, 3)
    H = np.linalg.solve(Td, Hn) @ Ts
    nz = np.abs(H[:, 2, 2]) > 1e-12
    ok &= nz
    H = H / np.where(nz, H[:, 2, 2], 1.0)[:, None, None]
    return H, ok


def _sym_transfer_error_batch(H, src, dst):
    """Symmetric transfer error for a batch of homographies. H: (B, 3, 3);
    returns (B, n) errors (inf where a model is not invertible)."""
    x1 = np.column_stack([src, np.ones(len(src))])
    x2 = np.column_stack([dst, np.ones(len(dst))])

    def transfer(M, p):
        ph = np.einsum("bij,nj->bni", M, p)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = ph[:, :, :2] / ph[:, :, 2:3]
        out[~np.isfinite(out).all(axis=2)] = 1e12
        return out

    e1 = np.linalg.norm(transfer(H, x1) - dst[None], axis=2)
    det = np.linalg.det(H)
    inv_ok = np.abs(det) > 1e-12
    Hi = np.linalg.inv(np.where(inv_ok[:, None, None], H, np.eye(3)[None]))
    e2 = np.linalg.norm(transfer(Hi, x2) - src[None], axis=2)
    err = e1 + e2
    err[~inv_ok] = np.inf
    return err


_RANSAC_BATCH = 256


def estimate_homography_ransac(
    src,
    dst,
    inlier_px: float = 10.0,
    confidence: float = 0.999,
    max_iters: int = 10000,
    seed: int = 0,
):
    """RANSAC over 4-point DLT samples; symmetric transfer error inliers;
    final model refit on the full inlier set."""
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    n = len(src)
    if n < 4:
        raise InsufficientMatchesError(f"need >= 4 matches, got {n}")
    if np.ptp(src, axis=0).max() < 1e-9 or np.ptp(dst, axis=0).max() < 1e-9:
        raise DegenerateGeometryError("all matches at one point")
    rng = np.random.default_rng(seed)
    best_inliers = None
    best_count = 0
    iters = max_iters
    done = 0
    while done < iters:
        batch = min(_RANSAC_BATCH, iters - done)
        samples = np.stack([rng.choice(n, size=4, replace=False) for _ in range(batch)])
        H, ok = _dlt_homography_batch(src[samples], dst[samples])
        err = _sym_transfer_error_batch(H, src, dst)
        inl = err <= 2 * inlier_px  # symmetric error sums two transfers
        counts = np.where(ok, inl.sum(axis=1), -1)
        # sequential scan preserves first-best-wins and adaptive stopping
        for b in range(batch):
            done += 1
            if counts[b] > best_count:
                best_count = int(counts[b])
                best_inliers = inl[b]
                iters = min(iters, _adaptive_iters(best_count / n, 4, confidence, max_iters))
            if done >= iters:
                break
    if best_inliers is None or best_count < 4:
        raise DegenerateGeometryError("no homography consensus found")
    H = dlt_homography(src[best_inliers], dst[best_inliers])
    err = _sym_transfer_error(H, src, dst)
    inliers = np.nonzero(err <= 2 * inlier_px)[0]
    return H, inliers


def eight_point_fundamental(src, dst):
    """Normalized eight-point algorithm with rank-2 enforcement."""
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    if len(src) < 8 or len(src) != len(dst):
        raise InsufficientMatchesError("need at least 8 correspondences")
    ns, Ts = _hartley_normalize(src)
    nd, Td = _hartley_normalize(dst)
    x1, y1 = ns[:, 0], ns[:, 1]
    x2, y2 = nd[:, 0], nd[:, 1]
    A = np.column_stack(
        [x2 * x1, x2 * y1, x2, y2 * x1, y2 * y1, y2, x1, y1, np.ones(len(x1))]
    )
    _, s, vt = np.linalg.svd(A)
    if s[-2] < 1e-9 * max(s[0], 1e-300):
        raise DegenerateGeometryError(
            "epipolar system is rank deficient (planar or rotation-only scene)"
        )
    F = vt[-1].reshape(3, 3)
    u, sv, v = np.linalg.svd(F)
    F = u @ np.diag([sv[0], sv[1], 0.0]) @ v
    F = Td.T @ F @ Ts
    nrm = np.linalg.norm(F)
    if nrm < 1e-12:
        raise DegenerateGeometryError("degenerate fundamental matrix")
    return F / nrm


def sampson_distance(F, src, dst):
    """First-order epipolar error, in the units of the input points."""
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    x1 = np.column_stack([src, np.ones(len(src))])
    x2 = np.column_stack([dst, np.ones(len(dst))])
    Fx1 = x1 @ F.T
    Ftx2 = x2 @ F
    num = np.einsum("ij,ij->i", x2, Fx1)
    den = Fx1[:, 0] ** 2 + Fx1[:, 1] ** 2 + Ftx2[:, 0] ** 2 + Ftx2[:, 1] ** 2
    den = np.maximum(den, 1e-300)
    return np.abs(num) / np.sqrt(den)


def _eight_point_batch(src, dst):
    """Minimal eight-point solve for a batch of samples. src, dst: (B, 8, 2).
    Returns (F, ok)."""
    B = len(src)
    ns, Ts, bad_s = _normalize_batch(src)
    nd, Td, bad_d = _normalize_batch(dst)
    ok = ~(bad_s | bad_d)
    x1, y1 = ns[:, :, 0], ns[:, :, 1]
    x2, y2 = nd[:, :, 0], nd[:, :, 1]
    A = np.stack(
        [x2 * x1, x2 * y1, x2, y2 * x1, y2 * y1, y2, x1, y1, np.ones_like(x1)],
        axis=2,
    )
    _, s, vt = np.linalg.svd(A)
    ok &= s[:, -2] >= 1e-9 * np.maximum(s[:, 0], 1e-300)
    F = vt[:, -1].reshape(B, 3, 3)
    u, sv, v = np.linalg.svd(F)
    sv = sv.copy()
    sv[:, 2] = 0.0
    F = (u * sv[:, None, :]) @ v
    F = np.swapaxes(Td, 1, 2) @ F @ Ts
    nrm = np.linalg.norm(F, axis=(1, 2))
    ok &= nrm > 1e-12
    return F / np.maximum(nrm, 1e-300)[:, None, None], ok


def _sampson_batch(F, src, dst):
    """Sampson distance for a batch of fundamental matrices: (B, n)."""
    x1 = np.column_stack([src, np.ones(len(src))])
    x2 = np.column_stack([dst, np.ones(len(dst))])
    Fx1 = np.einsum("bij,nj->bni", F, x1)
    Ftx2 = np.einsum("bji,nj->bni", F, x2)
    num = np.einsum("nj,bnj->bn", x2, Fx1)
    den = (Fx1[:, :, :2] ** 2).sum(axis=2) + (Ftx2[:, :, :2] ** 2).sum(axis=2)
    return np.abs(num) / np.sqrt(np.maximum(den, 1e-300))


def _epipolar_ransac(src, dst, thresh, confidence, max_iters, seed):
    n = len(src)
    rng = np.random.default_rng(seed)
    best = None
    best_count = 0
    iters = max_iters
    done = 0
    while done < iters:
        batch = min(_RANSAC_BATCH, iters - done)
        samples = np.stack([rng.choice(n, size=8, replace=False) for _ in range(batch)])
        F, ok = _eight_point_batch(src[samples], dst[samples])
        inl = _sampson_batch(F, src, dst) <= thresh
        counts = np.where(ok, inl.sum(axis=1), -1)
        for b in range(batch):
            done += 1
            if counts[b] > best_count:
                best_count = int(counts[b])
                best = inl[b]
                iters = min(iters, _adaptive_iters(best_count / n, 8, confidence, max_iters))
            if done >= iters:
                break
    if best is None or best_count < 8:
        raise DegenerateGeometryError("no epipolar consensus found")
    F = eight_point_fundamental(src[best], dst[best])
    inliers = np.nonzero(sampson_distance(F, src, dst) <= thresh)[0]
    return F, inliers


def estimate_fundamental_ransac(
    src, dst, inlier_px: float = 3.0, confidence: float = 0.999,
    max_iters: int = 10000, seed: int = 0,
):
    """RANSAC eight-point fundamental matrix in pixel coordinates."""
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    if len(src) < 8:
        raise InsufficientMatchesError(f"need >= 8 matches, got {len(src)}")
    return _epipolar_ransac(src, dst, inlier_px, confidence, max_iters, seed)


def _normalize_points(pts, K):
    ph = np.column_stack([pts, np.ones(len(pts))]) @ K.K_inv.T
    return ph[:, :2]


def _enforce_essential(E):
    u, s, vt = np.linalg.svd(E)
    sigma = (s[0] + s[1]) / 2.0
    return u @ np.diag([sigma, sigma, 0.0]) @ vt


def estimate_essential_ransac(
    src, dst, K_a, K_b, sampson_px: float = 2.0, confidence: float = 0.999,
    max_iters: int = 10000, seed: int = 0,
):
    """RANSAC essential matrix via normalized eight-point samples.

    The Sampson threshold is given in pixels and converted to normalized
    units with the mean focal length. Returns (E, inlier indices) with E
    satisfying the two-equal-singular-value constraint.
    """
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    if len(src) < 8:
        raise InsufficientMatchesError(f"need >= 8 matches, got {len(src)}")
    f_mean = (K_a.fx + K_a.fy + K_b.fx + K_b.fy) / 4.0
    xn1 = _normalize_points(src, K_a)
    xn2 = _normalize_points(dst, K_b)
    F, inliers = _epipolar_ransac(
        xn1, xn2, sampson_px / f_mean, confidence, max_iters, seed
    )
    E = _enforce_essential(F)
    # refit on the final inlier set, re-enforcing the essential structure
    try:
        F2 = eight_point_fundamental(xn1[inliers], xn2[inliers])
        E2 = _enforce_essential(F2)
        err = sampson_distance(E2, xn1, xn2)
        inl2 = np.nonzero(err <= sampson_px / f_mean)[0]
        if len(inl2) >= len(inliers):
            E, inliers = E2, inl2
    except DegenerateGeometryError:
        pass
    return E / np.linalg.norm(E), inliers


def _triangulate_midpoint(R, t, x1, x2):
    """Midpoint triangulation for normalized image points. Returns depths
    (z in camera 1, z in camera 2) per correspondence."""
    d1 = np.column_stack([x1, np.ones(len(x1))])
    d1 /= np.linalg.norm(d1, axis=1, keepdims=True)
    d2c = np.column_stack([x2, np.ones(len(x2))])
    d2c /= np.linalg.norm(d2c, axis=1, keepdims=True)
    d2 = d2c @ R          # camera-2 ray directions in camera-1 coordinates
    c2 = -R.T @ t         # camera-2 center in camera-1 coordinates

    # closest points of ray1: s*d1 and ray2: c2 + u*d2
    dd = np.einsum("ij,ij->i", d1, d2)
    p = d1 @ c2
    q = d2 @ c2
    denom = np.maximum(1.0 - dd * dd, 1e-12)
    s = (p - q * dd) / denom
    u = s * dd - q
    mid = 0.5 * (d1 * s[:, None] + c2[None, :] + d2 * u[:, None])
    z1 = mid[:, 2]
    z2 = mid @ R[2, :] + t[2]
    return z1, z2


def recover_pose(E, src, dst, K_a, K_b) -> RelativePose:
    """Cheirality-resolved pose from an essential matrix and its inliers.

    Convention: x_b = R x_a + t (up to scale), t unit.
    """
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    if len(src) < 1:
        raise InsufficientMatchesError("need at least one inlier correspondence")
    x1 = _normalize_points(src, K_a)
    x2 = _normalize_points(dst, K_b)
    u, _, vt = np.linalg.svd(E)
    if np.linalg.det(u) < 0:
        u = -u
    if np.linalg.det(vt) < 0:
        vt = -vt
    W = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    R1 = u @ W @ vt
    R2 = u @ W.T @ vt
    tvec = u[:, 2]
    tvec = tvec / np.linalg.norm(tvec)

    counts = []
    cands = [(R1, tvec), (R1, -tvec), (R2, tvec), (R2, -tvec)]
    for R, t in cands:
        z1, z2 = _triangulate_midpoint(R, t, x1, x2)
        counts.append(int(((z1 > 0) & (z2 > 0)).sum()))
    if len(set(counts)) == 1:
        raise AmbiguousPoseError("cheirality does not separate pose candidates")
    best = int(np.argmax(counts))
    R, t = cands[best]
    return RelativePose(R=R, t=t)


def decompose_homography(H, K_a, K_b, src, dst, depth=None):
    """Pose from a plane-induced homography (for planar-degenerate scenes).

    Faugeras-Lustman SVD decomposition of the calibrated homography
    Hn ~ R + t n^T / d into candidate (R, t, n) triplets; cheirality over
    the given correspondences selects the winner. Convention matches
    recover_pose (x_b = R x_a + t). Returns (RelativePose, plane unit
    normal in camera A, or None when the homography is a pure rotation).

    A single plane seen from two views admits two physically valid
    decompositions in general. When `depth` (per-src-point depth in
    camera A) is supplied it breaks the tie: for the true normal,
    depth_i * (n . ray_i) is the constant plane distance, so the
    candidate with the smallest relative spread of that product wins.
    """
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    x1n = _normalize_points(src, K_a)
    x2n = _normalize_points(dst, K_b)

    Hn = K_b.K_inv @ H @ K_a.K
    U, sv, Vt = np.linalg.svd(Hn)
    if sv[1] < 1e-12:
        raise DegenerateGeometryError("homography is rank deficient")
    Hn = Hn / sv[1]
    # visibility: x2^T Hn x1 > 0 for points seen in front of both cameras
    h1 = np.column_stack([x1n, np.ones(len(x1n))])
    h2 = np.column_stack([x2n, np.ones(len(x2n))])
    signs = np.einsum("ij,ij->i", h2, h1 @ Hn.T)
    if np.median(signs) < 0:
        Hn = -Hn

    U, sv, Vt = np.linalg.svd(Hn)
    d1, d2, d3 = sv
    s = np.linalg.det(U) * np.linalg.det(Vt)
    V = Vt.T

    if d1 - d3 < 1e-9:
        # pure rotation: no parallax, translation direction undefined
        R = s * U @ Vt
        return RelativePose(R=R, t=np.array([0.0, 0.0, 1.0])), None

    aux1 = np.sqrt(max(d1 * d1 - d2 * d2, 0.0) / (d1 * d1 - d3 * d3))
    aux3 = np.sqrt(max(d2 * d2 - d3 * d3, 0.0) / (d1 * d1 - d3 * d3))
    x1s = (aux1, aux1, -aux1, -aux1)
    x3s = (aux3, -aux3, aux3, -aux3)

    cands = []
    # d' = +d2 family
    st_mag = np.sqrt(max((d1 * d1 - d2 * d2) * (d2 * d2 - d3 * d3), 0.0)) / (
        (d1 + d3) * d2
    )
    ct = (d2 * d2 + d1 * d3) / ((d1 + d3) * d2)
    sts = (st_mag, -st_mag, -st_mag, st_mag)
    for x1, x3, st in zip(x1s, x3s, sts):
        Rp = np.array([[ct, 0.0, -st], [0.0, 1.0, 0.0], [st, 0.0, ct]])
        R = s * (U @ Rp @ Vt)
        tp = (d1 - d3) * np.array([x1, 0.0, -x3])
        t = U @ tp
        n = V @ np.array([x1, 0.0, x3])
        cands.append((R, t, n))
    # d' = -d2 family
    sp_mag = np.sqrt(max((d1 * d1 - d2 * d2) * (d2 * d2 - d3 * d3), 0.0)) / (
        (d1 - d3) * d2
    )
    cp = (d1 * d3 - d2 * d2) / ((d1 - d3) * d2)
    sps = (sp_mag, -sp_mag, -sp_mag, sp_mag)
    for x1, x3, sp in zip(x1s, x3s, sps):
        Rp = np.array([[cp, 0.0, sp], [0.0, 1.0, 0.0], [sp, 0.0, -cp]])
        R = s * (U @ Rp @ Vt)
        tp = (d1 + d3) * np.array([x1, 0.0, x3])
        t = U @ tp
        n = V @ np.array([x1, 0.0, x3])
        cands.append((R, t, n))

    scored = []
    for R, t, n in cands:
        if np.linalg.det(R) < 0:
            continue
        nt = np.linalg.norm(t)
        if nt < 1e-12:
            continue
        tu = t / nt
        n = n / np.linalg.norm(n)
        # fix the (t, n) -> (-t, -n) gauge so the plane is in front of A
        if np.median(h1 @ n) < 0:
            n = -n
            tu = -tu
        z1, z2 = _triangulate_midpoint(R, tu, x1n, x2n)
        cheiral = int(((z1 > 0) & (z2 > 0)).sum())
        front = float(np.median(h1 @ n))
        scored.append((cheiral, front, R, tu, n))
    if not scored:
        raise DegenerateGeometryError("homography decomposition failed")
    top = max(c for c, _, _, _, _ in scored)
    if top < 1:
        raise DegenerateGeometryError("homography decomposition failed")
    survivors = [s for s in scored if s[0] == top]
    if depth is not None and len(survivors) > 1:
        depth = np.asarray(depth, dtype=np.float64)
        best = None
        best_spread = np.inf
        for _, _, R, tu, n in survivors:
            v = depth * (h1 @ n)
            mean = np.mean(v)
            if mean <= 0:
                continue
            spread = np.std(v) / mean
            if spread < best_spread:
                best_spread = spread
                best = (R, tu, n)
        if best is None:
            _, _, R, tu, n = max(survivors, key=lambda s: s[1])
            best = (R, tu, n)
    else:
        _, _, R, tu, n = max(survivors, key=lambda s: s[1])
        best = (R, tu, n)
    R, t, n = best
    # absorb numerical drift
    uu, _, vv = np.linalg.svd(R)
    R = uu @ vv
    if np.linalg.det(R) < 0:
        R = uu @ np.diag([1.0, 1.0, -1.0]) @ vv
    return RelativePose(R=R, t=t), n / np.linalg.norm(n)


def rotation_error_deg(R_est, R_gt):
    """Magnitude in degrees of the rotation aligning R_est with R_gt."""
    if not is_rotation(R_est) or not is_rotation(R_gt):
        raise ValueError("inputs must be rotation matrices")
    c = np.clip((np.trace(R_est @ np.asarray(R_gt).T) - 1.0) / 2.0, -1.0, 1.0)
    return float(np.degrees(np.arccos(c)))
