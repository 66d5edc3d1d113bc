"""Shared fixtures: small calibrated cameras and rendered oracle scenes."""

import numpy as np
import pytest

from planerect.camera import DepthMap, Intrinsics
from planerect.synthetic import (
    CameraPose,
    ScenePlane,
    default_intrinsics,
    look_at,
    render_view,
)


@pytest.fixture
def K_small():
    return Intrinsics(fx=100.0, fy=100.0, cx=50.0, cy=50.0, width=101, height=101)


@pytest.fixture(scope="session")
def K_render():
    return default_intrinsics()


def make_plane(normal_hint="ground", size=20.0, seed=3):
    if normal_hint == "ground":
        return ScenePlane(
            origin=np.array([-size / 2, -size / 2, 0.0]),
            axis_u=np.array([1.0, 0.0, 0.0]),
            axis_v=np.array([0.0, 1.0, 0.0]),
            extent=(size, size),
            seed=seed,
        )
    raise ValueError(normal_hint)


@pytest.fixture(scope="session")
def tilted_plane_scene(K_render):
    """A textured ground plate seen from 45 degrees elevation."""
    plane = make_plane()
    center = np.array([0.0, -4.0, 4.0])  # elevation 45 over the target
    pose = look_at(center, np.zeros(3))
    image, depth, plane_id = render_view([plane], pose, K_render)
    return {
        "plane": plane,
        "pose": pose,
        "image": image,
        "depth": depth,
        "plane_id": plane_id,
        "normal_cam": pose.R @ plane.normal,
    }


@pytest.fixture(scope="session")
def fronto_plane(K_render):
    """Constant-depth plane: fronto-parallel, filling the frame."""
    h, w = K_render.height, K_render.width
    rng = np.random.default_rng(7)
    image = rng.uniform(0.2, 0.8, size=(h, w))
    depth = DepthMap.from_array(np.full((h, w), 2.0))
    return {"image": image, "depth": depth}


def fronto_pose(dist=2.0):
    """Camera almost straight above the ground plate, looking down.

    The tiny lateral offset keeps look_at's up vector non-degenerate; the
    residual tilt is ~1e-7 degrees, far below every tolerance used here.
    """
    return look_at(np.array([0.0, 1e-6 * dist, dist]), np.zeros(3))
