import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from stereovol.errors import DomainError
from stereovol.geom import (
    Box3D,
    CameraModel,
    StereoRig,
    box_in_image,
    depth_of_disparity,
    disparity,
    make_rig,
    normalize_yaw,
    project,
    project_box,
    project_points,
    unproject,
    unproject_points,
)

coord = st.floats(-50, 50, allow_nan=False)
depth = st.floats(1, 100, allow_nan=False)


def test_project_principal_ray(rig):
    assert project(rig.left, (0, 0, 10)) == (621.0, 187.0, 10.0)


def test_project_offset_point(rig):
    u, v, z = project(rig.left, (1, 0, 10))
    assert (u, v, z) == pytest.approx((693.0, 187.0, 10.0), abs=1e-12)


@pytest.mark.parametrize("point", [(0, 0, -1), (1, 1, 0)])
def test_project_behind_camera(rig, point):
    with pytest.raises(DomainError):
        project(rig.left, point)


def test_unproject_examples(rig):
    np.testing.assert_allclose(unproject(rig.left, 621, 187, 10), (0, 0, 10), atol=1e-12)
    np.testing.assert_allclose(unproject(rig.left, 693, 187, 10), (1, 0, 10), atol=1e-12)
    with pytest.raises(DomainError):
        unproject(rig.left, 5, 5, 0)


def test_disparity_examples(rig):
    assert disparity(rig, 9) == pytest.approx(40.0, abs=1e-12)
    assert disparity(rig, 360) == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(DomainError):
        disparity(rig, 0)


@given(depth)
def test_disparity_roundtrip(z):
    rig = make_rig(720.0, 621.0, 187.0, 0.5, 1242, 375)
    assert depth_of_disparity(rig, disparity(rig, z)) == pytest.approx(z, rel=1e-14)


@given(depth, depth)
def test_disparity_strictly_decreasing(a, b):
    rig = make_rig(720.0, 621.0, 187.0, 0.5, 1242, 375)
    if a < b:
        assert disparity(rig, a) > disparity(rig, b)


@given(coord, coord, depth)
def test_rectification_and_epipolar(x, y, z):
    rig = make_rig(720.0, 621.0, 187.0, 0.5, 1242, 375)
    ul, vl, _ = project(rig.left, (x, y, z))
    ur, vr, _ = project(rig.right, (x - rig.baseline, y, z))
    assert vl == vr
    assert ul - ur == pytest.approx(720.0 * 0.5 / z, rel=1e-9, abs=1e-9)
    # The posed right camera gives the same pixel.
    ur2, vr2, _ = rig.project_right((x, y, z))
    assert (ur2, vr2) == pytest.approx((ur, vr), abs=1e-9)


@given(coord, coord, depth)
def test_project_unproject_roundtrip(x, y, z):
    cam = CameraModel(700.0, 710.0, 600.0, 180.0, 1242, 375)
    u, v, d = project(cam, (x, y, z))
    p = unproject(cam, u, v, d)
    assert np.linalg.norm(p - (x, y, z)) < 1e-9 * max(1.0, math.hypot(x, y, z))


def test_posed_camera_roundtrip():
    pose = np.array([[0, 0, 1, 0.2], [0, 1, 0, -0.1], [-1, 0, 0, 0.3]], float)
    cam = CameraModel(720, 720, 600, 180, 1242, 375, pose=pose)
    pts = np.random.default_rng(0).uniform(-5, 5, (50, 3))
    q = cam.to_camera(pts)
    q[:, 2] = np.abs(q[:, 2]) + 1
    world = cam.from_camera(q)
    uv, z = project_points(cam, world)
    back = unproject_points(cam, uv[:, 0], uv[:, 1], z)
    np.testing.assert_allclose(back, world, atol=1e-9)


def test_project_points_marks_behind_with_nan(rig):
    uv, z = project_points(rig.left, [[0, 0, 10], [0, 0, -2]])
    assert np.all(np.isfinite(uv[0])) and np.all(np.isnan(uv[1]))
    assert z[1] == -2


def test_camera_validation():
    with pytest.raises(DomainError):
        CameraModel(0, 1, 1, 1, 10, 10)
    with pytest.raises(DomainError):
        CameraModel(1, 1, 20, 1, 10, 10)
    with pytest.raises(DomainError):
        CameraModel(1, 1, 1, 1, 10, 10, pose=(1, 2, 3))


def test_rig_validation():
    a = CameraModel(720, 720, 600, 180, 1242, 375)
    with pytest.raises(DomainError):
        StereoRig(a, a, 0.0)
    with pytest.raises(DomainError):
        StereoRig(a, CameraModel(700, 720, 600, 180, 1242, 375), 0.5)
    with pytest.raises(DomainError):
        StereoRig(a, a.with_pose(np.hstack([np.eye(3), np.ones((3, 1))])), 0.5)


def test_with_pose_identity_stored_as_none():
    a = CameraModel(720, 720, 600, 180, 1242, 375)
    assert a.with_pose(np.hstack([np.eye(3), np.zeros((3, 1))])).pose is None


@given(st.floats(-20, 20, allow_nan=False))
def test_normalize_yaw_range(a):
    y = normalize_yaw(a)
    assert -math.pi < y <= math.pi
    assert math.cos(y) == pytest.approx(math.cos(a), abs=1e-9)


def test_box_corners_order_and_contains():
    box = Box3D((0, 0, 10), (4, 2, 1.5), 0.0)
    c = box.corners()
    np.testing.assert_allclose(c[0], (2, 0.75, 11))
    np.testing.assert_allclose(c[1], (-2, 0.75, 11))
    np.testing.assert_allclose(c[2], (-2, 0.75, 9))
    np.testing.assert_allclose(c[3], (2, 0.75, 9))
    np.testing.assert_allclose(c[4:, 1], -0.75)
    assert box.contains(c).all()
    assert not box.contains([[0, 0, 11.01]]).any()


def test_box_yaw_sign_matches_kitti():
    # Heading +x rotated by +pi/2 about y points to -z (KITTI rotation_y).
    box = Box3D((0, 0, 10), (4, 2, 1), math.pi / 2)
    c = box.corners()
    assert c[:, 2].min() == pytest.approx(8.0)
    assert c[:, 0].max() == pytest.approx(1.0)


@given(st.floats(-math.pi, math.pi), st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1))
def test_box_contains_matches_local_frame(yaw, a, b, c):
    box = Box3D((1, 0.5, 12), (3, 1.5, 2), yaw)
    local = np.array([a * 1.5, c * 1.0, b * 0.75])
    cs, sn = math.cos(box.yaw), math.sin(box.yaw)
    p = np.array([cs * local[0] + sn * local[2], local[1], -sn * local[0] + cs * local[2]]) + box.center
    assert box.contains(p, eps=1e-9)[0]


def test_box_validation():
    with pytest.raises(DomainError):
        Box3D((0, 0, 0), (0, 1, 1))
    with pytest.raises(DomainError):
        Box3D((0, 0, 10), (1, 1, 1), score=1.5)


def test_project_box_unit_cube():
    cam = CameraModel(720, 720, 621, 187, 1242, 375)
    pb = project_box(cam, Box3D((0, 0, 10), (1, 1, 1)))
    # Nearest face at z = 9.5 sets the hull: 720 * 0.5 / 9.5 each side.
    half = 720 * 0.5 / 9.5
    np.testing.assert_allclose(pb.bbox, (621 - half, 187 - half, 621 + half, 187 + half))
    far = project_box(cam, Box3D((0, 0, 20), (1, 1, 1)))
    w10 = pb.bbox[2] - pb.bbox[0]
    w20 = far.bbox[2] - far.bbox[0]
    assert w20 == pytest.approx(720 / 19.5)
    assert w10 / w20 == pytest.approx(19.5 / 9.5)


def test_project_box_face_width_at_center_depth():
    # The face-to-face width at the center depth is 720 * (1 / 10) = 72 px.
    cam = CameraModel(720, 720, 621, 187, 1242, 375)
    uv, _ = project_points(cam, [[-0.5, 0, 10], [0.5, 0, 10]])
    assert uv[1, 0] - uv[0, 0] == pytest.approx(72.0)


def test_project_box_behind_camera():
    cam = CameraModel(720, 720, 621, 187, 1242, 375)
    with pytest.raises(DomainError):
        project_box(cam, Box3D((0, 0, 0.3), (1, 1, 1)))


def test_project_box_clips(rig):
    pb = project_box(rig.left, Box3D((0, 0, 2), (10, 1, 1)))
    assert pb.bbox[0] == 0 and pb.bbox[2] == 1241
    assert pb.bbox_unclipped[0] < 0
    assert not box_in_image(rig.left, Box3D((0, 0, 2), (10, 1, 1)))
    assert box_in_image(rig.left, Box3D((0, 0, 20), (1, 1, 1)))
