"""Resampling between camera-frustum and metric voxel volumes, and depth regression.

Feature pixel ``i`` of a frustum volume sits at image pixel ``i * stride``;
that mapping is used in both directions so the two resamplers are mutually
consistent.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np

from stereovol.errors import DomainError
from stereovol.geom import CameraModel, project_points, unproject_points
from stereovol.grid import (
    FrustumSpec,
    FrustumVolume,
    VoxelGridSpec,
    VoxelVolume,
    trilinear_sample_points,
)


@dataclass(frozen=True, eq=False)
class DepthMap:
    """Per-pixel depth in meters; 0 marks an invalid pixel."""

    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=np.float64)
        if vals.ndim != 2:
            raise DomainError(f"depth map must be 2D, got shape {vals.shape}")
        if not np.all(np.isfinite(vals)) or np.any(vals < 0):
            raise DomainError("depth values must be finite and non-negative (0 = invalid)")
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    @property
    def shape(self):
        return self.values.shape

    @property
    def valid(self):
        return self.values > 0


def frustum_coords_of_points(points, cam: CameraModel, fspec: FrustumSpec) -> np.ndarray:
    """Continuous (row, col, plane) indices of world points; NaN behind the camera."""
    uv, z = project_points(cam, points)
    idx = np.full((len(z), 3), np.nan)
    ok = z > 0
    idx[ok, 0] = uv[ok, 1] / fspec.stride
    idx[ok, 1] = uv[ok, 0] / fspec.stride
    idx[ok, 2] = fspec.plane_index(z[ok])
    return idx


def frustum_cell_points(cam: CameraModel, fspec: FrustumSpec, offset=0.0) -> np.ndarray:
    """World points of all frustum cells, shape (rows, cols, D, 3).

    ``offset`` shifts the sample inside the feature pixel (0.5 = pixel center).
    """
    rows = (np.arange(fspec.rows) + offset) * fspec.stride
    cols = (np.arange(fspec.cols) + offset) * fspec.stride
    v, u, d = np.meshgrid(rows, cols, fspec.planes, indexing="ij")
    return unproject_points(cam, u, v, d)


def frustum_to_voxel(fv: FrustumVolume, cam: CameraModel, vspec: VoxelGridSpec,
                     kernels=None) -> VoxelVolume:
    """Resample a frustum volume onto a voxel grid (trilinear, zero outside)."""
    centers = vspec.centers().reshape(-1, 3)
    idx = frustum_coords_of_points(centers, cam, fv.spec)
    out = np.empty((len(centers), fv.channels), np.float32)
    trilinear_sample_points(fv.data, idx, kernels=kernels, out=out)
    return VoxelVolume(vspec, out.reshape(vspec.shape(fv.channels)))


def voxel_to_frustum(vv: VoxelVolume, cam: CameraModel, fspec: FrustumSpec,
                     kernels=None) -> FrustumVolume:
    """Resample a voxel volume into frustum shape (trilinear, zero outside the grid)."""
    pts = frustum_cell_points(cam, fspec).reshape(-1, 3)
    idx = vv.spec.fractional_index(pts)
    out = np.empty((len(pts), vv.channels), np.float32)
    trilinear_sample_points(vv.data, idx, kernels=kernels, out=out)
    return FrustumVolume(fspec, out.reshape(fspec.shape(vv.channels)))


def integrate(a: VoxelVolume, b: VoxelVolume) -> VoxelVolume:
    """Channel concatenation of two volumes on the same lattice, ``a`` first."""
    if a.spec != b.spec:
        raise DomainError(f"voxel specs differ: {a.spec} vs {b.spec}")
    return VoxelVolume(a.spec, np.concatenate([a.data, b.data], axis=3))


def soft_argmin(logits, planes) -> np.ndarray:
    """Expected plane depth under a softmax over the last axis of ``logits``."""
    x = np.asarray(logits, dtype=np.float64)
    x = x - x.max(axis=-1, keepdims=True)
    p = np.exp(x)
    p /= p.sum(axis=-1, keepdims=True)
    return p @ np.asarray(planes, dtype=np.float64)


def resize_bilinear(img, size: Tuple[int, int]) -> np.ndarray:
    """Bilinear resize of a 2D array with edge clamping.

    Output pixel ``r`` reads source row ``r * rows_in / rows_out`` (same for
    columns), which for an integer upsampling factor puts source pixel ``i``
    at output pixel ``i * factor``.
    """
    src = np.asarray(img, dtype=np.float64)
    h, w = size
    ry = np.clip(np.arange(h) * (src.shape[0] / h), 0, src.shape[0] - 1)
    rx = np.clip(np.arange(w) * (src.shape[1] / w), 0, src.shape[1] - 1)
    y0 = np.floor(ry).astype(int)
    x0 = np.floor(rx).astype(int)
    y1 = np.minimum(y0 + 1, src.shape[0] - 1)
    x1 = np.minimum(x0 + 1, src.shape[1] - 1)
    fy = (ry - y0)[:, None]
    fx = (rx - x0)[None, :]
    top = src[y0][:, x0] * (1 - fx) + src[y0][:, x1] * fx
    bot = src[y1][:, x0] * (1 - fx) + src[y1][:, x1] * fx
    return top * (1 - fy) + bot * fy


def cost_to_depth(logits: FrustumVolume, upsample_to: Optional[Tuple[int, int]] = None) -> DepthMap:
    """Soft-argmin depth from single-channel plane logits, optionally upsampled.

    ``upsample_to`` is ``(rows, cols)`` at image resolution; default is
    ``rows * stride`` by ``cols * stride``.
    """
    if logits.channels != 1:
        raise DomainError(f"logits must have one channel, got {logits.channels}")
    spec = logits.spec
    depth = soft_argmin(logits.data[..., 0], spec.planes)
    if upsample_to is None:
        upsample_to = (int(round(spec.rows * spec.stride)), int(round(spec.cols * spec.stride)))
    if tuple(upsample_to) != depth.shape:
        depth = resize_bilinear(depth, upsample_to)
    # Guard the [min, max] plane range against last-bit rounding.
    return DepthMap(np.clip(depth, spec.planes[0], spec.planes[-1]))


def mean_reducer(data: np.ndarray) -> np.ndarray:
    return data.mean(axis=-1, dtype=np.float64)


def front_surface_depth(vv: VoxelVolume, cam: CameraModel, fspec: FrustumSpec,
                        reducer: Callable[[np.ndarray], np.ndarray] = mean_reducer,
                        upsample_to=None, kernels=None) -> DepthMap:
    """Depth from a 3D-space volume: resample to the frustum, reduce channels, soft-argmin.

    ``reducer`` maps (rows, cols, D, C) features to (rows, cols, D) logits.
    """
    fv = voxel_to_frustum(vv, cam, fspec, kernels=kernels)
    logits = np.asarray(reducer(fv.data), dtype=np.float32)[..., None]
    return cost_to_depth(FrustumVolume(fspec, logits), upsample_to)


def depth_l1(pred: DepthMap, gt: DepthMap, mask=None) -> float:
    """Mean absolute depth error over pixels with valid ground truth (and ``mask``)."""
    if pred.shape != gt.shape:
        raise DomainError(f"shape mismatch {pred.shape} vs {gt.shape}")
    sel = gt.valid
    if mask is not None:
        sel = sel & np.asarray(mask, dtype=bool)
    if not sel.any():
        raise DomainError("no valid ground-truth pixels")
    return float(np.abs(pred.values[sel] - gt.values[sel]).mean())
