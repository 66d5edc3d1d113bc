"""Numba-jitted implementations of the hot kernels.

Same algorithms as the numpy backend (closed-form 3x3 eigenvector, four-tap
bilinear sampling); results agree with the fallback to rounding error.
"""

import numpy as np
from numba import njit

_DEG_EPS = 1e-30


@njit(cache=True)
def _smallest_eigvec(a, b, c, d, e, f):
    """Smallest eigenvalue/eigenvector of the symmetric matrix
    [[a,d,e],[d,b,f],[e,f,c]]. Returns (ok, nx, ny, nz)."""
    p1 = d * d + e * e + f * f
    q = (a + b + c) / 3.0
    p2 = (a - q) ** 2 + (b - q) ** 2 + (c - q) ** 2 + 2.0 * p1
    if p2 <= _DEG_EPS:
        return False, 0.0, 0.0, 0.0
    p = np.sqrt(p2 / 6.0)
    aa = (a - q) / p
    bb = (b - q) / p
    cc = (c - q) / p
    dd = d / p
    ee = e / p
    ff = f / p
    detb = aa * (bb * cc - ff * ff) - dd * (dd * cc - ff * ee) + ee * (dd * ff - bb * ee)
    r = detb / 2.0
    if r < -1.0:
        r = -1.0
    elif r > 1.0:
        r = 1.0
    phi = np.arccos(r) / 3.0
    lam = q + 2.0 * p * np.cos(phi + 2.0 * np.pi / 3.0)

    m00 = a - lam
    m11 = b - lam
    m22 = c - lam
    # cross products of row pairs of (A - lam I)
    c01x = d * f - e * m11
    c01y = e * d - m00 * f
    c01z = m00 * m11 - d * d
    c02x = d * m22 - e * f
    c02y = e * e - m00 * m22
    c02z = m00 * f - d * e
    c12x = m11 * m22 - f * f
    c12y = f * e - d * m22
    c12z = d * f - m11 * e
    n01 = c01x * c01x + c01y * c01y + c01z * c01z
    n02 = c02x * c02x + c02y * c02y + c02z * c02z
    n12 = c12x * c12x + c12y * c12y + c12z * c12z
    if n01 >= n02 and n01 >= n12:
        nn, vx, vy, vz = n01, c01x, c01y, c01z
    elif n02 >= n12:
        nn, vx, vy, vz = n02, c02x, c02y, c02z
    else:
        nn, vx, vy, vz = n12, c12x, c12y, c12z
    norm = np.sqrt(nn)
    scale_ref = abs(lam)
    for s in (abs(a), abs(b), abs(c)):
        if s > scale_ref:
            scale_ref = s
    floor = 1e-14 * (scale_ref * scale_ref)
    if floor < 1e-14 * _DEG_EPS:
        floor = 1e-14 * _DEG_EPS
    if norm <= floor:
        return False, 0.0, 0.0, 0.0
    return True, vx / norm, vy / norm, vz / norm


@njit(cache=True)
def plane_normals(points, valid, half, min_pts):
    h, w = valid.shape
    normals = np.zeros((h, w, 3), dtype=np.float64)
    ok = np.zeros((h, w), dtype=np.bool_)
    for i in range(h):
        r0 = max(i - half, 0)
        r1 = min(i + half + 1, h)
        for j in range(w):
            if not valid[i, j]:
                continue
            c0 = max(j - half, 0)
            c1 = min(j + half + 1, w)
            n = 0
            sx = sy = sz = 0.0
            sxx = syy = szz = 0.0
            sxy = sxz = syz = 0.0
            for r in range(r0, r1):
                for c in range(c0, c1):
                    if not valid[r, c]:
                        continue
                    px = points[r, c, 0]
                    py = points[r, c, 1]
                    pz = points[r, c, 2]
                    n += 1
                    sx += px
                    sy += py
                    sz += pz
                    sxx += px * px
                    syy += py * py
                    szz += pz * pz
                    sxy += px * py
                    sxz += px * pz
                    syz += py * pz
            if n < min_pts:
                continue
            fn = float(n)
            mx = sx / fn
            my = sy / fn
            mz = sz / fn
            a = sxx / fn - mx * mx
            b = syy / fn - my * my
            c_ = szz / fn - mz * mz
            d = sxy / fn - mx * my
            e = sxz / fn - mx * mz
            f = syz / fn - my * mz
            good, nx, ny, nz = _smallest_eigvec(a, b, c_, d, e, f)
            if good:
                normals[i, j, 0] = nx
                normals[i, j, 1] = ny
                normals[i, j, 2] = nz
                ok[i, j] = True
    return normals, ok


@njit(cache=True)
def warp_bilinear(image, mask, hinv, out_h, out_w):
    h, w = image.shape
    out = np.zeros((out_h, out_w), dtype=np.float64)
    valid = np.zeros((out_h, out_w), dtype=np.bool_)
    for y in range(out_h):
        for x in range(out_w):
            denom = hinv[2, 0] * x + hinv[2, 1] * y + hinv[2, 2]
            if abs(denom) <= 1e-14:
                continue
            sx = (hinv[0, 0] * x + hinv[0, 1] * y + hinv[0, 2]) / denom
            sy = (hinv[1, 0] * x + hinv[1, 1] * y + hinv[1, 2]) / denom
            if not (np.isfinite(sx) and np.isfinite(sy)):
                continue
            x0 = int(np.floor(sx))
            y0 = int(np.floor(sy))
            if x0 < 0 or y0 < 0 or x0 + 1 > w - 1 or y0 + 1 > h - 1:
                continue
            if not (mask[y0, x0] and mask[y0, x0 + 1] and mask[y0 + 1, x0] and mask[y0 + 1, x0 + 1]):
                continue
            fx = sx - x0
            fy = sy - y0
            out[y, x] = (
                image[y0, x0] * (1 - fx) * (1 - fy)
                + image[y0, x0 + 1] * fx * (1 - fy)
                + image[y0 + 1, x0] * (1 - fx) * fy
                + image[y0 + 1, x0 + 1] * fx * fy
            )
            valid[y, x] = True
    return out, valid
