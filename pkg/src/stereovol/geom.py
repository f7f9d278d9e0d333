"""Rectified pinhole cameras, stereo rigs and 3D boxes.

Camera frame convention (KITTI): x right, y down, z forward. Depth always
means camera-frame z, never ray length.

A :class:`CameraModel` may carry an optional rigid ``pose`` mapping
world/rig coordinates into that camera's frame. With no pose the world frame
*is* the camera frame. A :class:`StereoRig` is expressed in its left camera's
world frame: the right camera sees ``left_pose(p) - (baseline, 0, 0)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Tuple

import numpy as np

from stereovol.errors import DomainError

Vec3 = Tuple[float, float, float]


def normalize_yaw(yaw):
    """Wrap an angle to (-pi, pi]."""
    a = math.remainder(float(yaw), 2.0 * math.pi)
    if a <= -math.pi:
        a += 2.0 * math.pi
    return a


@dataclass(frozen=True)
class CameraModel:
    f_u: float
    f_v: float
    c_u: float
    c_v: float
    image_width: int
    image_height: int
    # Row-major 3x4 world->camera transform; None is identity.
    pose: Optional[Tuple[float, ...]] = None

    def __post_init__(self):
        if not (self.f_u > 0 and self.f_v > 0):
            raise DomainError(f"focal lengths must be positive, got {self.f_u}, {self.f_v}")
        if not (0 <= self.c_u < self.image_width and 0 <= self.c_v < self.image_height):
            raise DomainError(
                f"principal point ({self.c_u}, {self.c_v}) outside "
                f"{self.image_width}x{self.image_height} image"
            )
        if self.pose is not None:
            pose = tuple(float(x) for x in np.asarray(self.pose, dtype=np.float64).ravel())
            if len(pose) != 12:
                raise DomainError("pose must have 12 entries (3x4)")
            object.__setattr__(self, "pose", pose)

    @property
    def K(self):
        return np.array(
            [[self.f_u, 0.0, self.c_u], [0.0, self.f_v, self.c_v], [0.0, 0.0, 1.0]]
        )

    @property
    def pose_matrix(self):
        """The 3x4 world->camera transform (identity when no pose is set)."""
        if self.pose is None:
            return np.hstack([np.eye(3), np.zeros((3, 1))])
        return np.array(self.pose, dtype=np.float64).reshape(3, 4)

    def with_pose(self, pose):
        """Copy with a new pose; an exact identity pose is stored as None."""
        if pose is not None:
            m = np.asarray(pose, dtype=np.float64).reshape(3, 4)
            if np.array_equal(m, np.hstack([np.eye(3), np.zeros((3, 1))])):
                pose = None
            else:
                pose = tuple(m.ravel())
        return replace(self, pose=pose)

    def to_camera(self, points):
        """Map world points of shape (..., 3) into this camera's frame."""
        pts = np.asarray(points, dtype=np.float64)
        if self.pose is None:
            return pts
        m = self.pose_matrix
        return pts @ m[:, :3].T + m[:, 3]

    def from_camera(self, points):
        """Inverse of :meth:`to_camera`."""
        pts = np.asarray(points, dtype=np.float64)
        if self.pose is None:
            return pts
        m = self.pose_matrix
        return (pts - m[:, 3]) @ m[:, :3]


@dataclass(frozen=True)
class StereoRig:
    left: CameraModel
    right: CameraModel
    baseline: float

    def __post_init__(self):
        if not self.baseline > 0:
            raise DomainError(f"baseline must be positive, got {self.baseline}")
        l, r = self.left, self.right
        if (l.f_u, l.f_v, l.c_v) != (r.f_u, r.f_v, r.c_v):
            raise DomainError("left and right cameras must share f_u, f_v and c_v (rectified pair)")
        if (l.image_width, l.image_height) != (r.image_width, r.image_height):
            raise DomainError("left and right images must share dimensions")
        if r.pose is not None:
            raise DomainError("the right camera pose is derived from the left pose and baseline")

    @property
    def f_u(self):
        return self.left.f_u

    @property
    def image_size(self):
        """(rows, cols)."""
        return self.left.image_height, self.left.image_width

    def right_camera(self):
        """The right camera with its pose relative to the rig (world) frame."""
        m = self.left.pose_matrix.copy()
        m[0, 3] -= self.baseline
        return replace(self.right, pose=tuple(m.ravel()))

    def cameras(self):
        """(left, right) cameras, both posed in the rig frame."""
        return self.left, self.right_camera()

    def project_left(self, point):
        return project(self.left, point)

    def project_right(self, point):
        return project(self.right_camera(), point)


def project(cam: CameraModel, point) -> Tuple[float, float, float]:
    """Project one world point to ``(u, v, depth)``.

    The result may fall outside the image; callers check bounds.
    """
    x, y, z = cam.to_camera(np.asarray(point, dtype=np.float64).reshape(3))
    if not z > 0:
        raise DomainError(f"point has non-positive depth {z}")
    return cam.f_u * x / z + cam.c_u, cam.f_v * y / z + cam.c_v, float(z)


def project_points(cam: CameraModel, points):
    """Vectorised projection of (N, 3) world points.

    Returns ``(uv, z)`` with ``uv`` of shape (N, 2) and camera depth ``z``.
    Entries with ``z <= 0`` have NaN pixel coordinates; no error is raised.
    """
    q = cam.to_camera(np.asarray(points, dtype=np.float64).reshape(-1, 3))
    z = q[:, 2]
    uv = np.full((len(q), 2), np.nan)
    ok = z > 0
    uv[ok, 0] = cam.f_u * q[ok, 0] / z[ok] + cam.c_u
    uv[ok, 1] = cam.f_v * q[ok, 1] / z[ok] + cam.c_v
    return uv, z


def unproject(cam: CameraModel, u, v, depth) -> np.ndarray:
    """Back-project pixel ``(u, v)`` at camera depth ``depth`` to a world point."""
    if not depth > 0:
        raise DomainError(f"depth must be positive, got {depth}")
    q = np.array(
        [(u - cam.c_u) * depth / cam.f_u, (v - cam.c_v) * depth / cam.f_v, float(depth)]
    )
    return cam.from_camera(q)


def unproject_points(cam: CameraModel, u, v, depth) -> np.ndarray:
    """Vectorised :func:`unproject`; arrays broadcast, output has a trailing axis of 3."""
    u, v, d = np.broadcast_arrays(
        np.asarray(u, dtype=np.float64),
        np.asarray(v, dtype=np.float64),
        np.asarray(depth, dtype=np.float64),
    )
    if np.any(d <= 0):
        raise DomainError("depth must be positive")
    q = np.stack([(u - cam.c_u) * d / cam.f_u, (v - cam.c_v) * d / cam.f_v, d], axis=-1)
    return cam.from_camera(q)


def disparity(rig: StereoRig, depth):
    """Horizontal disparity in full-resolution pixels, ``f_u * baseline / depth``."""
    if not depth > 0:
        raise DomainError(f"depth must be positive, got {depth}")
    return rig.f_u * rig.baseline / depth


def depth_of_disparity(rig: StereoRig, disp):
    if not disp > 0:
        raise DomainError(f"disparity must be positive, got {disp}")
    return rig.f_u * rig.baseline / disp


# Canonical corner order: bottom face then top face, each walking
# (+l,+w), (-l,+w), (-l,-w), (+l,-w) in the box's local x-z plane.
_CORNER_SIGNS = np.array(
    [
        [1, 1, 1],
        [-1, 1, 1],
        [-1, 1, -1],
        [1, 1, -1],
        [1, -1, 1],
        [-1, -1, 1],
        [-1, -1, -1],
        [1, -1, -1],
    ],
    dtype=np.float64,
)


@dataclass(frozen=True)
class Box3D:
    """Oriented 3D box in the camera frame.

    ``center`` is the geometric center (not KITTI's bottom center). ``size`` is
    ``(length, width, height)``: length runs along the heading, which for
    ``yaw == 0`` is +x; height runs along y. ``yaw`` rotates about the
    vertical (y) axis with the KITTI ``rotation_y`` sign.
    """

    center: Vec3
    size: Vec3
    yaw: float = 0.0
    class_id: str = "Car"
    score: Optional[float] = field(default=None)

    def __post_init__(self):
        center = tuple(float(c) for c in self.center)
        size = tuple(float(s) for s in self.size)
        if len(center) != 3 or len(size) != 3:
            raise DomainError("center and size need three components")
        if not all(s > 0 for s in size):
            raise DomainError(f"box size must be positive, got {size}")
        if self.score is not None and not 0.0 <= self.score <= 1.0:
            raise DomainError(f"score must lie in [0, 1], got {self.score}")
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "size", size)
        object.__setattr__(self, "yaw", normalize_yaw(self.yaw))

    @property
    def volume(self):
        l, w, h = self.size
        return l * w * h

    def corners(self) -> np.ndarray:
        """The 8 corners, shape (8, 3), in canonical order."""
        l, w, h = self.size
        local = _CORNER_SIGNS * np.array([l / 2.0, h / 2.0, w / 2.0])
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        x = c * local[:, 0] + s * local[:, 2]
        z = -s * local[:, 0] + c * local[:, 2]
        return np.stack([x, local[:, 1], z], axis=1) + np.array(self.center)

    def bev_corners(self) -> np.ndarray:
        """Footprint in the x-z plane, shape (4, 2), counter-clockwise order preserved."""
        return self.corners()[:4][:, [0, 2]]

    def contains(self, points, eps=0.0) -> np.ndarray:
        """Boolean mask of points inside the box; the boundary counts as inside."""
        p = np.asarray(points, dtype=np.float64).reshape(-1, 3) - np.array(self.center)
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        lx = c * p[:, 0] - s * p[:, 2]
        lz = s * p[:, 0] + c * p[:, 2]
        l, w, h = self.size
        return (
            (np.abs(lx) <= l / 2.0 + eps)
            & (np.abs(p[:, 1]) <= h / 2.0 + eps)
            & (np.abs(lz) <= w / 2.0 + eps)
        )


@dataclass(frozen=True)
class ProjectedBox:
    corners: np.ndarray  # (8, 2) pixel coordinates
    bbox: Tuple[float, float, float, float]  # u0, v0, u1, v1 clipped to the image
    bbox_unclipped: Tuple[float, float, float, float]

    @property
    def empty(self):
        u0, v0, u1, v1 = self.bbox
        return not (u1 > u0 and v1 > v0)


def project_box(cam: CameraModel, box: Box3D) -> ProjectedBox:
    """Project a box's corners and take their tight axis-aligned hull.

    The hull is clipped to ``[0, width-1] x [0, height-1]``.
    """
    uv, z = project_points(cam, box.corners())
    if np.any(z <= 0):
        raise DomainError("box has a corner at or behind the camera plane")
    lo = uv.min(axis=0)
    hi = uv.max(axis=0)
    raw = (float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1]))
    clipped = (
        min(max(raw[0], 0.0), cam.image_width - 1.0),
        min(max(raw[1], 0.0), cam.image_height - 1.0),
        min(max(raw[2], 0.0), cam.image_width - 1.0),
        min(max(raw[3], 0.0), cam.image_height - 1.0),
    )
    return ProjectedBox(corners=uv, bbox=clipped, bbox_unclipped=raw)


def box_in_image(cam: CameraModel, box: Box3D) -> bool:
    """True when all 8 corners are in front of the camera and inside the image."""
    uv, z = project_points(cam, box.corners())
    if np.any(z <= 0):
        return False
    return bool(
        np.all(uv[:, 0] >= 0)
        and np.all(uv[:, 0] <= cam.image_width - 1)
        and np.all(uv[:, 1] >= 0)
        and np.all(uv[:, 1] <= cam.image_height - 1)
    )


def make_rig(f, c_u, c_v, baseline, width, height, f_v=None) -> StereoRig:
    """Convenience constructor for an ideal rectified pair with shared intrinsics."""
    cam = CameraModel(f, f if f_v is None else f_v, c_u, c_v, width, height)
    return StereoRig(cam, cam, baseline)
