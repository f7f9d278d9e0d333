"""Dense grids: 2D feature maps, camera-frustum volumes and metric voxel volumes.

All grids store float32 with the channel axis innermost:

* :class:`FeatureMap2D`  ``(row, col, channel)``
* :class:`FrustumVolume` ``(row, col, depth_plane, channel)``
* :class:`VoxelVolume`   ``(i_x, i_y, i_z, channel)``

Sampling uses zero fill: lattice neighbours outside the grid contribute zero,
so a sample whose neighbours are all outside returns zeros.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from stereovol import _backend
from stereovol.errors import DomainError

DEFAULT_STRIDE = 4
DEFAULT_NUM_PLANES = 288
DEFAULT_VOXEL_SIZE = 0.2

_CHUNK = 1 << 18


def _freeze(data, ndim, name):
    arr = np.ascontiguousarray(data, dtype=np.float32)
    if arr.ndim != ndim:
        raise DomainError(f"{name} data must be {ndim}-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} data must be finite")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class FeatureMap2D:
    data: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "data", _freeze(self.data, 3, "FeatureMap2D"))

    @property
    def rows(self):
        return self.data.shape[0]

    @property
    def cols(self):
        return self.data.shape[1]

    @property
    def channels(self):
        return self.data.shape[2]

    @classmethod
    def zeros(cls, rows, cols, channels):
        return cls(np.zeros((rows, cols, channels), np.float32))


@dataclass(frozen=True)
class FrustumSpec:
    rows: int
    cols: int
    stride: float
    depth_planes: Tuple[float, ...]

    def __post_init__(self):
        planes = tuple(float(d) for d in self.depth_planes)
        object.__setattr__(self, "depth_planes", planes)
        if self.rows < 1 or self.cols < 1:
            raise DomainError("frustum rows and cols must be >= 1")
        if not self.stride >= 1:
            raise DomainError(f"stride must be >= 1, got {self.stride}")
        if not planes:
            raise DomainError("at least one depth plane is required")
        if planes[0] <= 0 or any(b <= a for a, b in zip(planes, planes[1:])):
            raise DomainError("depth planes must be positive and strictly increasing")

    @property
    def num_planes(self):
        return len(self.depth_planes)

    @property
    def planes(self):
        return np.array(self.depth_planes)

    @classmethod
    def uniform_depth(cls, rows, cols, num_planes=DEFAULT_NUM_PLANES, z_min=2.0, z_max=None,
                      stride=DEFAULT_STRIDE, spacing=DEFAULT_VOXEL_SIZE):
        """Planes evenly spaced in depth from ``z_min``.

        With ``z_max`` given the planes span ``[z_min, z_max]``; otherwise they
        step by ``spacing`` (0.2 m by default, so 288 planes cover 2.0-59.4 m).
        """
        if z_max is None:
            planes = z_min + spacing * np.arange(num_planes)
        else:
            planes = np.linspace(z_min, z_max, num_planes)
        return cls(rows, cols, stride, tuple(planes))

    @classmethod
    def uniform_disparity(cls, rows, cols, rig, num_planes=DEFAULT_NUM_PLANES, z_min=2.0,
                          z_max=60.0, stride=DEFAULT_STRIDE):
        """Planes evenly spaced in disparity between ``z_max`` and ``z_min``."""
        fb = rig.f_u * rig.baseline
        disp = np.linspace(fb / z_max, fb / z_min, num_planes)
        return cls(rows, cols, stride, tuple(np.sort(fb / disp)))

    def plane_index(self, z):
        """Fractional plane index of camera depth ``z``.

        Binary search plus linear interpolation inside the plane list, linear
        extrapolation from the end segments outside it. A single plane maps
        only its own depth to 0; anything else is returned as out of range.
        """
        planes = self.planes
        z = np.asarray(z, dtype=np.float64)
        if len(planes) == 1:
            return np.where(z == planes[0], 0.0, -2.0)
        k = np.clip(np.searchsorted(planes, z, side="right") - 1, 0, len(planes) - 2)
        lo = planes[k]
        hi = planes[k + 1]
        return k + (z - lo) / (hi - lo)

    def shape(self, channels):
        return (self.rows, self.cols, self.num_planes, channels)


@dataclass(frozen=True, eq=False)
class FrustumVolume:
    spec: FrustumSpec
    data: np.ndarray

    def __post_init__(self):
        data = _freeze(self.data, 4, "FrustumVolume")
        if data.shape[:3] != (self.spec.rows, self.spec.cols, self.spec.num_planes):
            raise DomainError(f"data shape {data.shape} does not match frustum spec")
        object.__setattr__(self, "data", data)

    @property
    def channels(self):
        return self.data.shape[3]


@dataclass(frozen=True)
class VoxelGridSpec:
    origin: Tuple[float, float, float]
    voxel_size: Tuple[float, float, float]
    dims: Tuple[int, int, int]

    def __post_init__(self):
        origin = tuple(float(o) for o in self.origin)
        size = self.voxel_size
        if np.isscalar(size):
            size = (size, size, size)
        size = tuple(float(s) for s in size)
        dims = tuple(int(n) for n in self.dims)
        if len(origin) != 3 or len(size) != 3 or len(dims) != 3:
            raise DomainError("origin, voxel_size and dims need three components")
        if not all(s > 0 for s in size):
            raise DomainError(f"voxel size must be positive, got {size}")
        if not all(n >= 1 for n in dims):
            raise DomainError(f"dims must be >= 1, got {dims}")
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "voxel_size", size)
        object.__setattr__(self, "dims", dims)

    @classmethod
    def kitti_default(cls):
        """x in [-30.4, 30.4), y in [-1, 3), z in [2, 59.6) at 0.2 m."""
        return cls((-30.4, -1.0, 2.0), (0.2, 0.2, 0.2), (304, 20, 288))

    @property
    def num_voxels(self):
        nx, ny, nz = self.dims
        return nx * ny * nz

    def centers_along(self, axis):
        return self.origin[axis] + (np.arange(self.dims[axis]) + 0.5) * self.voxel_size[axis]

    def centers(self) -> np.ndarray:
        """All voxel centers, shape (N_x, N_y, N_z, 3)."""
        xs, ys, zs = (self.centers_along(a) for a in range(3))
        gx, gy, gz = np.meshgrid(xs, ys, zs, indexing="ij")
        return np.stack([gx, gy, gz], axis=-1)

    def fractional_index(self, points) -> np.ndarray:
        """Continuous voxel index of metric points; integer values hit voxel centers."""
        p = np.asarray(points, dtype=np.float64)
        return (p - np.array(self.origin)) / np.array(self.voxel_size) - 0.5

    def shape(self, channels):
        return (*self.dims, channels)


@dataclass(frozen=True, eq=False)
class VoxelVolume:
    spec: VoxelGridSpec
    data: np.ndarray

    def __post_init__(self):
        data = _freeze(self.data, 4, "VoxelVolume")
        if data.shape[:3] != self.spec.dims:
            raise DomainError(f"data shape {data.shape} does not match voxel dims {self.spec.dims}")
        object.__setattr__(self, "data", data)

    @property
    def channels(self):
        return self.data.shape[3]


def voxel_center(spec: VoxelGridSpec, index: Sequence[int]) -> np.ndarray:
    idx = tuple(int(i) for i in index)
    if len(idx) != 3 or any(not 0 <= i < n for i, n in zip(idx, spec.dims)):
        raise DomainError(f"voxel index {index} outside dims {spec.dims}")
    return np.array([spec.origin[a] + (idx[a] + 0.5) * spec.voxel_size[a] for a in range(3)])


def _channel_slice(channels, channel_range):
    if channel_range is None:
        return slice(0, channels)
    lo, hi = channel_range
    if not 0 <= lo <= hi <= channels:
        raise DomainError(f"channel range {channel_range} outside [0, {channels}]")
    return slice(lo, hi)


def bilinear_sample(fmap, u, v, channel_range=None) -> np.ndarray:
    """Bilinear sample of a feature map at continuous column ``u``, row ``v``.

    Accepts a :class:`FeatureMap2D` or a bare (rows, cols, C) array.
    """
    data = fmap.data if isinstance(fmap, FeatureMap2D) else np.asarray(fmap)
    rows, cols, channels = data.shape
    sl = _channel_slice(channels, channel_range)
    out = np.zeros(sl.stop - sl.start)
    x0 = math.floor(u)
    y0 = math.floor(v)
    fx = u - x0
    fy = v - y0
    for dy, wy in ((0, 1.0 - fy), (1, fy)):
        y = y0 + dy
        if not 0 <= y < rows:
            continue
        for dx, wx in ((0, 1.0 - fx), (1, fx)):
            x = x0 + dx
            if 0 <= x < cols:
                out += (wy * wx) * data[y, x, sl].astype(np.float64)
    return out


def trilinear_sample(vol, index, channel_range=None) -> np.ndarray:
    """Trilinear sample of a frustum or voxel volume at a continuous index triple."""
    data = vol.data if isinstance(vol, (FrustumVolume, VoxelVolume)) else np.asarray(vol)
    dims = data.shape[:3]
    sl = _channel_slice(data.shape[3], channel_range)
    out = np.zeros(sl.stop - sl.start)
    base = [math.floor(c) for c in index]
    frac = [c - b for c, b in zip(index, base)]
    for corner in range(8):
        offs = ((corner >> 2) & 1, (corner >> 1) & 1, corner & 1)
        idx = tuple(b + o for b, o in zip(base, offs))
        if any(not 0 <= i < n for i, n in zip(idx, dims)):
            continue
        w = 1.0
        for o, f in zip(offs, frac):
            w *= f if o else 1.0 - f
        out += w * data[idx][sl].astype(np.float64)
    return out


def bilinear_sample_points(data, uv, kernels=None) -> np.ndarray:
    """Batched :func:`bilinear_sample` over (N, 2) ``(u, v)`` positions; float64 result."""
    k = kernels or _backend.kernels
    img = np.ascontiguousarray(data.data if isinstance(data, FeatureMap2D) else data, np.float32)
    uv = np.ascontiguousarray(uv, dtype=np.float64).reshape(-1, 2)
    out = np.zeros((len(uv), img.shape[2]))
    for s in range(0, len(uv), _CHUNK):
        k.bilinear_points(img, uv[s:s + _CHUNK], out[s:s + _CHUNK])
    return out


def trilinear_sample_points(data, idx, kernels=None, out=None) -> np.ndarray:
    """Batched :func:`trilinear_sample` over (N, 3) continuous indices.

    Results go to ``out`` (float32 or float64, shape (N, C)) when given.
    """
    k = kernels or _backend.kernels
    vol = np.ascontiguousarray(data, np.float32)
    idx = np.ascontiguousarray(idx, dtype=np.float64).reshape(-1, 3)
    if out is None:
        out = np.zeros((len(idx), vol.shape[3]))
    buf = np.zeros((min(len(idx), _CHUNK), vol.shape[3]))
    for s in range(0, len(idx), _CHUNK):
        n = min(_CHUNK, len(idx) - s)
        k.trilinear_points(vol, idx[s:s + n], buf[:n])
        out[s:s + n] = buf[:n]
    return out
