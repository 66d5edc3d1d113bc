"""Pinhole geometry: back-projection, rays, normal estimation."""

import numpy as np
import numpy.testing as npt
import pytest

from planerect.camera import (
    DepthMap,
    Intrinsics,
    backproject,
    backproject_map,
    estimate_normals,
    incidence_angle,
    project,
    viewing_ray,
)
from planerect.errors import InvalidDepthError, OrientationError


def test_backproject_principal_point(K_small):
    npt.assert_allclose(backproject(50, 50, 5.0, K_small), [0.0, 0.0, 5.0])


def test_backproject_offset_pixel(K_small):
    npt.assert_allclose(backproject(150, 50, 2.0, K_small), [2.0, 0.0, 2.0])


def test_backproject_zero_depth(K_small):
    with pytest.raises(InvalidDepthError):
        backproject(10, 10, 0.0, K_small)


def test_project_backproject_roundtrip(K_small):
    rng = np.random.default_rng(0)
    for _ in range(50):
        u, v = rng.uniform(0, 100, 2)
        d = rng.uniform(0.1, 10)
        npt.assert_allclose(project(backproject(u, v, d, K_small), K_small), [u, v], atol=1e-9)


def test_backproject_map_constant_depth(K_small):
    depth = DepthMap.from_array(np.ones((101, 101)))
    grid = backproject_map(depth, K_small)
    assert grid.valid.all()
    npt.assert_allclose(grid.points[..., 2], 1.0)


def test_backproject_map_invalid_pixel(K_small):
    d = np.ones((101, 101))
    d[40, 60] = np.nan
    grid = backproject_map(DepthMap.from_array(d), K_small)
    assert not grid.valid[40, 60]
    assert grid.valid.sum() == 101 * 101 - 1


def test_backproject_map_size_mismatch(K_small):
    with pytest.raises(ValueError):
        backproject_map(DepthMap.from_array(np.ones((10, 10))), K_small)


def test_viewing_ray(K_small):
    npt.assert_allclose(viewing_ray(K_small, 50, 50), [0.0, 0.0, 1.0])
    npt.assert_allclose(
        viewing_ray(K_small, 150, 50), [np.sqrt(0.5), 0.0, np.sqrt(0.5)], atol=1e-12
    )
    rng = np.random.default_rng(1)
    for _ in range(20):
        r = viewing_ray(K_small, rng.uniform(0, 100), rng.uniform(0, 100))
        assert abs(np.linalg.norm(r) - 1.0) <= 1e-12


def test_normals_fronto_parallel_plane(K_small):
    depth = DepthMap.from_array(np.full((101, 101), 3.0))
    nm = estimate_normals(backproject_map(depth, K_small), K_small)
    interior = nm.valid[2:-2, 2:-2]
    assert interior.all()
    dots = nm.normals[2:-2, 2:-2] @ np.array([0.0, 0.0, -1.0])
    assert np.degrees(np.arccos(np.clip(dots, -1, 1))).max() < 0.5


def test_normals_rendered_tilted_plane(tilted_plane_scene, K_render):
    nm = estimate_normals(
        backproject_map(tilted_plane_scene["depth"], K_render), K_render
    )
    n_gt = tilted_plane_scene["normal_cam"]
    if n_gt[2] > 0:
        n_gt = -n_gt
    # interior = valid pixels whose full 5x5 window is on the plane
    core = np.ones_like(nm.valid)
    core[:2] = core[-2:] = False
    core[:, :2] = core[:, -2:] = False
    sel = nm.valid & core
    assert sel.any()
    dots = np.abs(nm.normals[sel] @ n_gt)
    assert np.degrees(np.arccos(np.clip(dots, -1, 1))).max() < 0.5


def test_normals_truncated_window_invalid(K_small):
    d = np.full((101, 101), 2.0)
    d[:20] = np.nan
    nm = estimate_normals(backproject_map(DepthMap.from_array(d), K_small), K_small)
    # pixels whose window holds fewer than 6 valid points are invalid
    assert not nm.valid[0, 0]
    assert not nm.valid[10, 50]
    assert nm.valid[50, 50]


def test_normals_unit_and_camera_facing(tilted_plane_scene, K_render):
    nm = estimate_normals(
        backproject_map(tilted_plane_scene["depth"], K_render), K_render
    )
    norms = np.linalg.norm(nm.normals[nm.valid], axis=1)
    assert np.abs(norms - 1.0).max() <= 1e-9
    from planerect.camera import ray_grid

    rays = ray_grid(K_render)
    dots = np.einsum("ij,ij->i", nm.normals[nm.valid], rays[nm.valid])
    assert (dots < 0).all()


def test_normals_depth_scale_invariance(tilted_plane_scene, K_render):
    depth = tilted_plane_scene["depth"]
    nm1 = estimate_normals(backproject_map(depth, K_render), K_render)
    scaled = DepthMap.from_array(depth.depth * 3.7)
    nm2 = estimate_normals(backproject_map(scaled, K_render), K_render)
    both = nm1.valid & nm2.valid
    dots = np.abs(np.einsum("ij,ij->i", nm1.normals[both], nm2.normals[both]))
    assert np.degrees(np.arccos(np.clip(dots, -1, 1))).max() < 1e-4


def test_incidence_angle():
    assert incidence_angle([0, 0, -1], [0, 0, 1]) == pytest.approx(0.0)
    r = np.array([1, 0, 1]) / np.sqrt(2)
    assert incidence_angle([0, 0, -1], r) == pytest.approx(45.0)
    with pytest.raises(OrientationError):
        incidence_angle([0, 0, 1], [0, 0, 1])


def test_intrinsics_validation():
    with pytest.raises(ValueError):
        Intrinsics(fx=-1, fy=1, cx=0, cy=0, width=10, height=10)
    with pytest.raises(ValueError):
        Intrinsics(fx=1, fy=1, cx=0, cy=0, width=0, height=10)
