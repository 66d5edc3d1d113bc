"""Hot numeric kernels with selectable backend.

Set PLANERECT_BACKEND=numpy to force the pure-numpy implementations;
the default is the numba-jitted versions when numba imports cleanly.
"""

import os

_requested = os.environ.get("PLANERECT_BACKEND", "").strip().lower()

if _requested not in ("", "numba", "numpy"):
    raise ValueError(f"PLANERECT_BACKEND must be 'numba' or 'numpy', got {_requested!r}")

if _requested == "numpy":
    BACKEND = "numpy"
else:
    try:
        import numba  # noqa: F401
        BACKEND = "numba"
    except ImportError:
        if _requested == "numba":
            raise
        BACKEND = "numpy"

if BACKEND == "numba":
    from ._numba import plane_normals, warp_bilinear
else:
    from ._numpy import plane_normals, warp_bilinear

__all__ = ["BACKEND", "plane_normals", "warp_bilinear"]
