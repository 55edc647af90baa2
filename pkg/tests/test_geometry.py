import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pannav.errors import EmptyCluster
from pannav.geometry import (
    CameraModel,
    Pose2D,
    Pose3D,
    aabb_of,
    forward_camera_extrinsic,
    project_point,
    project_points,
    transform_points,
    wrap_angle,
)

finite = st.floats(-100, 100, allow_nan=False)
angle = st.floats(-math.pi, math.pi, allow_nan=False)
points = st.lists(st.tuples(finite, finite, finite), min_size=1, max_size=30)


def cam100():
    return CameraModel(100.0, 100.0, 320.0, 240.0, 640, 480)


def test_identity_transform():
    p = np.array([[1.0, -2.0, 3.0], [0.5, 0.0, 7.0]])
    assert np.array_equal(transform_points(p, Pose3D()), p)


def test_pure_translation():
    out = transform_points([[0.0, 0.0, 0.0]], Pose3D((1.0, 0.0, 0.0)))
    assert out.tolist() == [[1.0, 0.0, 0.0]]


def test_yaw_quarter_turn():
    out = transform_points([[1.0, 0.0, 0.0]], Pose3D.from_xyz_rpy(yaw=math.pi / 2))
    assert np.allclose(out, [[0.0, 1.0, 0.0]], atol=1e-12)


def test_pose_validation():
    with pytest.raises(ValueError):
        Pose3D(frame_id="")
    with pytest.raises(ValueError):
        Pose2D(0, 0, frame_id="")
    q = Pose3D(rotation=(2.0, 0.0, 0.0, 0.0)).rotation
    assert abs(np.linalg.norm(q) - 1) < 1e-9


@given(angle_raw=st.floats(-50, 50, allow_nan=False))
def test_heading_wrapped(angle_raw):
    h = Pose2D(0, 0, angle_raw).heading
    assert -math.pi < h <= math.pi
    assert math.isclose(math.cos(h), math.cos(angle_raw), abs_tol=1e-9)
    assert math.isclose(math.sin(h), math.sin(angle_raw), abs_tol=1e-9)


def test_wrap_angle_edges():
    assert wrap_angle(math.pi) == math.pi
    assert wrap_angle(-math.pi) == math.pi
    assert wrap_angle(3 * math.pi) == pytest.approx(math.pi)


@given(points, finite, finite, finite, angle, st.floats(-1.5, 1.5), angle)
def test_transform_roundtrip(pts, x, y, z, roll, pitch, yaw):
    T = Pose3D.from_xyz_rpy(x, y, z, roll, pitch, yaw, child_frame_id="a")
    back = transform_points(transform_points(pts, T), T.inverse())
    assert np.allclose(back, np.asarray(pts), atol=1e-9, rtol=0)


@given(points, angle, angle)
def test_transform_preserves_distances(pts, roll, yaw):
    T = Pose3D.from_xyz_rpy(1.0, 2.0, 3.0, roll, 0.3, yaw)
    p = np.asarray(pts)
    q = transform_points(p, T)
    assert np.allclose(np.linalg.norm(p - p[0], axis=1), np.linalg.norm(q - q[0], axis=1), atol=1e-9)


def test_compose_matches_sequential_application():
    A = Pose3D.from_xyz_rpy(1, 2, 3, 0.1, 0.2, 0.3)
    B = Pose3D.from_xyz_rpy(-1, 0.5, 2, -0.4, 0.1, 1.0)
    p = np.array([[0.3, -0.7, 1.1]])
    assert np.allclose(transform_points(p, A.compose(B)), transform_points(transform_points(p, B), A), atol=1e-12)


def test_project_examples():
    cam = cam100()
    assert project_point((0.0, 0.0, 1.0), cam) == (320.0, 240.0)
    assert project_point((0.5, 0.0, 2.0), cam) == (345.0, 240.0)
    assert project_point((0.0, 0.0, -1.0), cam) is None


def test_project_near_plane_and_bounds():
    cam = cam100()
    assert project_point((0.0, 0.0, 0.01), cam) is None
    assert project_point((0.0, 0.0, 0.0101), cam) is not None
    assert project_point((10.0, 0.0, 1.0), cam) is None  # u = 1320
    assert project_point((-3.2, -2.4, 1.0), cam) == (0.0, 0.0)  # inclusive lower edge
    assert project_point((3.2, 0.0, 1.0), cam) is None  # u = 640 is outside [0, 640)


@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(0.5, 20), st.floats(1.001, 50))
def test_projection_scale_invariant(x, y, z, s):
    cam = cam100()
    a = project_point((x, y, z), cam)
    b = project_point((s * x, s * y, s * z), cam)
    if a is not None and b is not None:
        assert abs(a[0] - b[0]) <= 1e-9 and abs(a[1] - b[1]) <= 1e-9


def test_camera_validation():
    with pytest.raises(ValueError):
        CameraModel(0.0, 1.0, 1, 1, 10, 10)
    with pytest.raises(ValueError):
        CameraModel(1.0, 1.0, 10, 1, 10, 10)
    with pytest.raises(ValueError):
        CameraModel(1.0, 1.0, 1, 1, 0, 10)


def test_forward_camera_looks_along_body_x():
    ext = forward_camera_extrinsic(0, 0, 2.0)
    cam = CameraModel.from_fov(160, 120, math.radians(90), ext)
    # a point 5 m ahead at camera height lands on the principal point
    p_cam = transform_points([[5.0, 0.0, 2.0]], ext.inverse())
    uv, vis = project_points(p_cam, cam)
    assert vis[0] and np.allclose(uv[0], [80.0, 60.0])
    # a point to the left (+y body) appears at smaller u, a higher one at smaller v
    left = transform_points([[5.0, 1.0, 2.0]], ext.inverse())
    up = transform_points([[5.0, 0.0, 3.0]], ext.inverse())
    assert project_points(left, cam)[0][0, 0] < 80
    assert project_points(up, cam)[0][0, 1] < 60


def test_aabb_examples():
    b = aabb_of([[1.0, 2.0, 3.0]])
    assert b.min_corner == b.max_corner == (1.0, 2.0, 3.0)
    b = aabb_of([[0, 0, 0], [1, 2, 3]])
    assert b.min_corner == (0, 0, 0) and b.max_corner == (1, 2, 3)
    b = aabb_of([[1, 1, 1], [-1, -1, -1], [0, 0, 0]])
    assert b.min_corner == (-1, -1, -1) and b.max_corner == (1, 1, 1)
    with pytest.raises(EmptyCluster):
        aabb_of(np.zeros((0, 3)))


@given(points)
def test_aabb_contains_inputs(pts):
    b = aabb_of(pts)
    assert b.contains(pts).all()
    p = np.asarray(pts)
    assert np.array_equal(np.asarray(b.min_corner), p.min(axis=0))
    assert np.array_equal(np.asarray(b.max_corner), p.max(axis=0))
