"""Shared test fixtures and scene builders."""

import numpy as np
import pytest

from orpm.maps import GridSpec, PersonGT, SceneGT
from orpm.skeleton import N_JOINTS, PARENT_RELATIVE, Joint, Pose3D

SMALL_GRID = GridSpec(64, 64, 4, 8)


def neutral_pose_coords() -> np.ndarray:
    """A small articulated parent-relative pose with distinct offsets."""
    coords = np.zeros((N_JOINTS, 3))
    coords[Joint.SPINE] = (0.01, -0.25, 0.002)
    coords[Joint.NECK] = (-0.01, -0.24, 0.001)
    coords[Joint.HEAD] = (0.02, -0.12, 0.01)
    coords[Joint.HEAD_TOP] = (0.0, -0.13, 0.0)
    coords[Joint.SHOULDER_L] = (0.18, 0.02, 0.01)
    coords[Joint.ELBOW_L] = (0.07, 0.25, -0.02)
    coords[Joint.WRIST_L] = (0.05, 0.24, 0.03)
    coords[Joint.SHOULDER_R] = (-0.18, 0.02, -0.01)
    coords[Joint.ELBOW_R] = (-0.07, 0.25, 0.02)
    coords[Joint.WRIST_R] = (-0.05, 0.24, -0.03)
    coords[Joint.HIP_L] = (0.10, 0.02, 0.0)
    coords[Joint.KNEE_L] = (0.03, 0.41, 0.01)
    coords[Joint.ANKLE_L] = (0.01, 0.40, -0.01)
    coords[Joint.HIP_R] = (-0.10, 0.02, 0.0)
    coords[Joint.KNEE_R] = (-0.03, 0.41, -0.01)
    coords[Joint.ANKLE_R] = (-0.01, 0.40, 0.01)
    return coords


def spread_joints_2d(origin=(6.0, 6.0), step=3.0) -> np.ndarray:
    """17 distinct pixel locations on a diagonal ramp inside a 64px frame."""
    ox, oy = origin
    return np.array([[ox + step * j, oy + 2.9 * j] for j in range(N_JOINTS)])


def make_person(
    joints_2d=None,
    root_depth: float = 3.0,
    coords=None,
    occluded=None,
) -> PersonGT:
    joints_2d = spread_joints_2d() if joints_2d is None else np.asarray(joints_2d, float)
    coords = neutral_pose_coords() if coords is None else coords
    occluded = np.zeros(N_JOINTS, bool) if occluded is None else occluded
    return PersonGT(Pose3D(coords, PARENT_RELATIVE), joints_2d, root_depth, occluded)


def make_scene(persons, grid: GridSpec = SMALL_GRID) -> SceneGT:
    return SceneGT(grid, tuple(persons))


@pytest.fixture
def small_grid() -> GridSpec:
    return SMALL_GRID
