"""Benchmark the numba kernels against the pure-numpy fallback.

Run: python3 benchmarks/bench_kernels.py
(The PLANERECT_BACKEND env var selects the backend for library use; here
both implementations are imported directly and timed side by side.)
"""

import time

import numpy as np

from planerect.camera import Intrinsics, DepthMap, backproject_map
from planerect.kernels import _numpy as knp

try:
    from planerect.kernels import _numba as knb
except ImportError:
    knb = None


def _timeit(fn, *args, repeat=5):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def make_scene(h, w):
    K = Intrinsics(fx=0.9 * w, fy=0.9 * w, cx=w / 2, cy=h / 2, width=w, height=h)
    u, v = np.meshgrid(np.arange(w), np.arange(h))
    # tilted plane with a hole to exercise the validity handling
    depth = 2.0 + 0.002 * u + 0.001 * v
    depth[h // 3 : h // 3 + 12, w // 3 : w // 3 + 12] = np.nan
    return K, DepthMap.from_array(depth)


def bench_normals(h, w, half=2, min_pts=6):
    K, depth = make_scene(h, w)
    pts = backproject_map(depth, K)
    t_np, (n_np, v_np) = _timeit(knp.plane_normals, pts.points, pts.valid, half, min_pts)
    row = f"plane_normals {w}x{h}  numpy {t_np * 1e3:8.1f} ms"
    if knb is not None:
        knb.plane_normals(pts.points, pts.valid, half, min_pts)  # compile
        t_nb, (n_nb, v_nb) = _timeit(knb.plane_normals, pts.points, pts.valid, half, min_pts)
        agree = np.array_equal(v_np, v_nb) and (
            np.abs(n_np[v_np] - n_nb[v_nb]).max() < 1e-5
        )
        row += f"  numba {t_nb * 1e3:8.1f} ms  speedup {t_np / t_nb:5.1f}x  agree={agree}"
    print(row)


def bench_warp(h, w):
    rng = np.random.default_rng(0)
    img = rng.random((h, w))
    mask = np.ones((h, w), dtype=bool)
    H_inv = np.array([[0.9, 0.05, 3.0], [-0.02, 1.1, -2.0], [1e-5, -2e-5, 1.0]])
    t_np, (o_np, v_np) = _timeit(knp.warp_bilinear, img, mask, H_inv, h, w)
    row = f"warp_bilinear {w}x{h}  numpy {t_np * 1e3:8.1f} ms"
    if knb is not None:
        knb.warp_bilinear(img, mask, H_inv, h, w)  # compile
        t_nb, (o_nb, v_nb) = _timeit(knb.warp_bilinear, img, mask, H_inv, h, w)
        agree = np.array_equal(v_np, v_nb) and np.abs(o_np - o_nb).max() < 1e-12
        row += f"  numba {t_nb * 1e3:8.1f} ms  speedup {t_np / t_nb:5.1f}x  agree={agree}"
    print(row)


if __name__ == "__main__":
    if knb is None:
        print("numba unavailable; timing the numpy fallback only")
    for h, w in ((240, 320), (480, 640), (960, 1280)):
        bench_normals(h, w)
    for h, w in ((240, 320), (480, 640), (960, 1280)):
        bench_warp(h, w)
