"""Pure-numpy implementations of the hot kernels.

Windowed plane fitting uses integral images, so the cost is independent of
the window size. The smallest eigenvector of the 3x3 window covariance is
computed with the closed-form trigonometric eigenvalue formula followed by
a cross-product null-space extraction; the numba backend uses the same
algorithm so both paths agree to rounding.
"""

import numpy as np

_DEG_EPS = 1e-30


def _integral(channel):
    out = np.zeros((channel.shape[0] + 1, channel.shape[1] + 1), dtype=np.float64)
    np.cumsum(np.cumsum(channel, axis=0), axis=1, out=out[1:, 1:])
    return out


def _window_sum(integral, half, h, w):
    r = np.arange(h)
    c = np.arange(w)
    r0 = np.clip(r - half, 0, h)[:, None]
    r1 = np.clip(r + half + 1, 0, h)[:, None]
    c0 = np.clip(c - half, 0, w)[None, :]
    c1 = np.clip(c + half + 1, 0, w)[None, :]
    return (integral[r1, c1] - integral[r1, c0] - integral[r0, c1] + integral[r0, c0])


def plane_normals(points, valid, half, min_pts):
    """Total-least-squares plane normal per pixel over a (2*half+1)^2 window.

    Returns (normals, normal_valid); normals are unit but unoriented (the
    caller fixes the camera-facing sign). Pixels whose window holds fewer
    than min_pts valid points, or whose covariance has no unique smallest
    eigenvector, are invalid.
    """
    h, w = valid.shape
    v = valid.astype(np.float64)
    x = np.where(valid, points[..., 0], 0.0)
    y = np.where(valid, points[..., 1], 0.0)
    z = np.where(valid, points[..., 2], 0.0)

    chans = [v, x, y, z, x * x, y * y, z * z, x * y, x * z, y * z]
    sums = [_window_sum(_integral(ch), half, h, w) for ch in chans]
    n, sx, sy, sz, sxx, syy, szz, sxy, sxz, syz = sums

    ok = n >= min_pts
    n_safe = np.where(ok, n, 1.0)
    mx, my, mz = sx / n_safe, sy / n_safe, sz / n_safe
    # covariance (about the window centroid)
    a = sxx / n_safe - mx * mx
    b = syy / n_safe - my * my
    c = szz / n_safe - mz * mz
    d = sxy / n_safe - mx * my
    e = sxz / n_safe - mx * mz
    f = syz / n_safe - my * mz

    # smallest eigenvalue of [[a,d,e],[d,b,f],[e,f,c]] (trigonometric form)
    p1 = d * d + e * e + f * f
    q = (a + b + c) / 3.0
    p2 = (a - q) ** 2 + (b - q) ** 2 + (c - q) ** 2 + 2.0 * p1
    ok &= p2 > _DEG_EPS
    p = np.sqrt(np.maximum(p2, _DEG_EPS) / 6.0)
    aa, bb, cc = (a - q) / p, (b - q) / p, (c - q) / p
    dd, ee, ff = d / p, e / p, f / p
    detb = aa * (bb * cc - ff * ff) - dd * (dd * cc - ff * ee) + ee * (dd * ff - bb * ee)
    r = np.clip(detb / 2.0, -1.0, 1.0)
    phi = np.arccos(r) / 3.0
    lam = q + 2.0 * p * np.cos(phi + 2.0 * np.pi / 3.0)

    # null space of (A - lam I) via the largest row cross product
    m00, m11, m22 = a - lam, b - lam, c - lam
    r0 = np.stack([m00, d, e], axis=-1)
    r1 = np.stack([d, m11, f], axis=-1)
    r2 = np.stack([e, f, m22], axis=-1)
    c01 = np.cross(r0, r1)
    c02 = np.cross(r0, r2)
    c12 = np.cross(r1, r2)
    n01 = np.einsum("...i,...i->...", c01, c01)
    n02 = np.einsum("...i,...i->...", c02, c02)
    n12 = np.einsum("...i,...i->...", c12, c12)
    best = np.where(
        (n01 >= n02)[..., None] & (n01 >= n12)[..., None],
        c01,
        np.where((n02 >= n12)[..., None], c02, c12),
    )
    norm = np.sqrt(np.maximum(n01, np.maximum(n02, n12)))
    scale_ref = np.maximum(np.abs(lam), np.maximum(np.abs(a), np.maximum(np.abs(b), np.abs(c))))
    ok &= norm > 1e-14 * np.maximum(scale_ref * scale_ref, _DEG_EPS)
    ok &= valid

    normals = np.zeros((h, w, 3), dtype=np.float64)
    safe = np.where(ok, norm, 1.0)[..., None]
    np.divide(best, safe, out=normals, where=ok[..., None])
    return normals, ok


def warp_bilinear(image, mask, hinv, out_h, out_w):
    """Inverse-map warp: out(x,y) samples image at hinv @ (x,y,1), bilinear.

    An output pixel is valid only if all four source taps fall inside the
    image and inside mask.
    """
    xs = np.arange(out_w, dtype=np.float64)
    ys = np.arange(out_h, dtype=np.float64)
    gx, gy = np.meshgrid(xs, ys)
    denom = hinv[2, 0] * gx + hinv[2, 1] * gy + hinv[2, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        sx = (hinv[0, 0] * gx + hinv[0, 1] * gy + hinv[0, 2]) / denom
        sy = (hinv[1, 0] * gx + hinv[1, 1] * gy + hinv[1, 2]) / denom
    h, w = image.shape
    finite = np.isfinite(sx) & np.isfinite(sy) & (np.abs(denom) > 1e-14)
    sx = np.where(finite, sx, -1.0)
    sy = np.where(finite, sy, -1.0)
    x0 = np.floor(sx).astype(np.int64)
    y0 = np.floor(sy).astype(np.int64)
    inb = (x0 >= 0) & (y0 >= 0) & (x0 + 1 <= w - 1) & (y0 + 1 <= h - 1)
    x0c = np.clip(x0, 0, w - 2)
    y0c = np.clip(y0, 0, h - 2)
    fx = sx - x0c
    fy = sy - y0c
    i00 = image[y0c, x0c]
    i01 = image[y0c, x0c + 1]
    i10 = image[y0c + 1, x0c]
    i11 = image[y0c + 1, x0c + 1]
    out = (
        i00 * (1 - fx) * (1 - fy)
        + i01 * fx * (1 - fy)
        + i10 * (1 - fx) * fy
        + i11 * fx * fy
    )
    mvalid = (
        mask[y0c, x0c]
        & mask[y0c, x0c + 1]
        & mask[y0c + 1, x0c]
        & mask[y0c + 1, x0c + 1]
    )
    valid = inb & mvalid
    out = np.where(valid, out, 0.0)
    return out, valid
