"""Backend parity: the numba and pure-numpy kernels must agree."""

import json
import os
import subprocess
import sys

import numpy as np
import numpy.testing as npt

from planerect import kernels

_PROBE = r"""
import json, sys
import numpy as np
from planerect import kernels

rng = np.random.default_rng(7)
h, w = 60, 80
points = rng.uniform(-1.0, 1.0, size=(h, w, 3))
points[..., 2] = rng.uniform(2.0, 5.0, size=(h, w))
valid = rng.uniform(size=(h, w)) > 0.1
normals, ok = kernels.plane_normals(points, valid, 2, 9)

img = rng.uniform(size=(40, 50))
mask = rng.uniform(size=(40, 50)) > 0.05
th = np.radians(12.0)
H = np.array([[np.cos(th), -np.sin(th), 8.0],
              [np.sin(th), np.cos(th), -3.0],
              [1e-4, -5e-5, 1.0]])
out, out_valid = kernels.warp_bilinear(img, mask, np.linalg.inv(H), 70, 75)

print(json.dumps({
    "backend": kernels.BACKEND,
    "normals": normals[ok].ravel().tolist(),
    "ok": ok.ravel().astype(int).tolist(),
    "out": out[out_valid].ravel().tolist(),
    "out_valid": out_valid.ravel().astype(int).tolist(),
}))
"""


def _run(backend):
    env = dict(os.environ, PLANERECT_BACKEND=backend)
    proc = subprocess.run(
        [sys.executable, "-c", _PROBE], env=env, capture_output=True, text=True
    )
    assert proc.returncode == 0, proc.stderr
    return json.loads(proc.stdout)


def test_backend_selection_env():
    out = _run("numpy")
    assert out["backend"] == "numpy"


def test_backends_agree():
    a = _run("numpy")
    b = _run("numba")
    if b["backend"] != "numba":
        import pytest

        pytest.skip("numba not available")
    npt.assert_array_equal(a["ok"], b["ok"])
    npt.assert_array_equal(a["out_valid"], b["out_valid"])
    npt.assert_allclose(a["normals"], b["normals"], atol=1e-12)
    npt.assert_allclose(a["out"], b["out"], atol=1e-12)


def test_invalid_backend_rejected():
    env = dict(os.environ, PLANERECT_BACKEND="fortran")
    proc = subprocess.run(
        [sys.executable, "-c", "import planerect.kernels"],
        env=env, capture_output=True, text=True,
    )
    assert proc.returncode != 0
    assert "PLANERECT_BACKEND" in proc.stderr


def test_current_backend_reported():
    assert kernels.BACKEND in ("numba", "numpy")
