"""Volume construction from 2D feature maps.

Three ways of choosing which source channels feed each depth plane:

``classic``
    every plane takes channels ``[0, C_V)``.
``depthwise``
    a sliding window whose offset grows with disparity, reordered by
    :func:`cyclic_slice` so a channel keeps its output slot across planes.
``grouped``
    channels split into equal groups, planes split into as many contiguous
    runs, run ``g`` takes group ``g``.

All modes reduce to a per-plane channel map fed to the same sampling kernel,
so the sampling work per output cell is identical by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from stereovol import _backend
from stereovol.errors import DomainError
from stereovol.geom import CameraModel, StereoRig, disparity
from stereovol.grid import (
    DEFAULT_STRIDE,
    FeatureMap2D,
    FrustumSpec,
    FrustumVolume,
    VoxelGridSpec,
    VoxelVolume,
)

MODES = ("classic", "depthwise", "grouped")

DEFAULT_C_IN = 96
DEFAULT_C_V = 32
ALPHA_FRUSTUM = 0.1
ALPHA_VOXEL = 0.5


@dataclass(frozen=True)
class SweepConfig:
    """Channel-selection parameters.

    ``s`` is the disparity-to-channel ratio; ``None`` means ``c_in / D`` with
    ``D`` the number of depth planes (or z slices) of the target grid.
    ``group_size`` is used by the grouped mode only (defaults to ``c_v``).
    """

    mode: str = "depthwise"
    c_in: int = DEFAULT_C_IN
    c_v: int = DEFAULT_C_V
    alpha: float = ALPHA_FRUSTUM
    s: Optional[float] = None
    group_size: Optional[int] = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise DomainError(f"unknown sweep mode {self.mode!r}; expected one of {MODES}")
        if not 1 <= self.c_v <= self.c_in:
            raise DomainError(f"need 1 <= C_V <= C_I, got C_V={self.c_v}, C_I={self.c_in}")
        if not self.alpha >= 0:
            raise DomainError(f"alpha must be >= 0, got {self.alpha}")
        if self.s is not None and not self.s > 0:
            raise DomainError(f"s must be positive, got {self.s}")

    def ratio(self, num_planes=None):
        if self.s is not None:
            return self.s
        if not num_planes:
            raise DomainError("shift ratio s needs either an explicit value or the plane count")
        return self.c_in / num_planes


@dataclass
class SampleCounter:
    """Accumulates 2D-map samples and output cells across builds."""

    samples: int = 0
    cells: int = 0

    def add(self, samples, cells):
        self.samples += int(samples)
        self.cells += int(cells)

    @property
    def per_cell(self):
        return self.samples / self.cells if self.cells else 0.0


def shift_of_depth(rig: StereoRig, depth, cfg: SweepConfig, num_planes=None) -> int:
    """Channel-window offset for a plane at ``depth``.

    ``floor(floor(disparity) ** alpha * s)`` clamped to ``[0, C_I - C_V]``,
    with disparity in full-resolution pixels.
    """
    disp = disparity(rig, depth)
    raw = math.floor(math.floor(disp) ** cfg.alpha * cfg.ratio(num_planes))
    return min(max(raw, 0), cfg.c_in - cfg.c_v)


def cyclic_slice(shift, c_in, c_v) -> list:
    """Source channels for a window starting at ``shift``.

    The window ``[shift, shift + c_v)`` is rotated so that output slot ``j``
    holds the channel congruent to ``j`` modulo ``c_v``: first the part from
    the next multiple of ``c_v`` onwards, then the part before it.
    """
    if not 1 <= c_v <= c_in:
        raise DomainError(f"need 1 <= C_V <= C_I, got C_V={c_v}, C_I={c_in}")
    if not 0 <= shift <= c_in - c_v:
        raise DomainError(f"shift {shift} outside [0, {c_in - c_v}]")
    boundary = -(-shift // c_v) * c_v
    return list(range(boundary, shift + c_v)) + list(range(shift, boundary))


def channel_map(cfg: SweepConfig, depths, rig: StereoRig) -> np.ndarray:
    """Per-plane source channels, shape (len(depths), C_V), int32."""
    depths = np.asarray(depths, dtype=np.float64)
    n = len(depths)
    if cfg.mode == "classic":
        rows = [list(range(cfg.c_v))] * n
    elif cfg.mode == "depthwise":
        rows = []
        for d in depths:
            shift = shift_of_depth(rig, d, cfg, n) if d > 0 else 0
            rows.append(cyclic_slice(shift, cfg.c_in, cfg.c_v))
    else:
        size = cfg.group_size or cfg.c_v
        return group_channel_map(cfg.c_in, size, n)
    return np.array(rows, dtype=np.intc).reshape(n, cfg.c_v)


def group_channel_map(c_in, group_size, num_planes) -> np.ndarray:
    """Channel map of the grouped baseline: plane ``k`` uses group ``k * G // D``."""
    if group_size < 1 or c_in % group_size:
        raise DomainError(f"C_I={c_in} is not divisible by group size {group_size}")
    groups = c_in // group_size
    g = np.arange(num_planes) * groups // num_planes
    return (g[:, None] * group_size + np.arange(group_size)[None, :]).astype(np.intc)


def right_shifts(rig: StereoRig, spec: FrustumSpec) -> np.ndarray:
    """Per-plane horizontal offset (feature pixels) from a left pixel to its right match."""
    disp = rig.f_u * rig.baseline / spec.planes
    return (disp - (rig.right.c_u - rig.left.c_u)) / spec.stride


def plane_sweep(left, right, shifts, chan, out=None, kernels=None) -> Tuple[np.ndarray, int]:
    """Low-level sweep on raw arrays; returns ``(volume_data, samples)``.

    ``out`` (float32, writable, (rows, cols, D, 2*C_V)) is reused when given.
    """
    k = kernels or _backend.kernels
    rows, cols = left.shape[:2]
    planes, cv = chan.shape
    shape = (rows, cols, planes, 2 * cv)
    if out is None:
        out = np.empty(shape, np.float32)
    elif out.shape != shape or out.dtype != np.float32:
        raise DomainError(f"output buffer must be float32 {shape}")
    samples = k.sweep_frustum(
        np.ascontiguousarray(left, np.float32),
        np.ascontiguousarray(right, np.float32),
        np.ascontiguousarray(shifts, np.float64),
        np.ascontiguousarray(chan, np.intc),
        out,
    )
    return out, samples


def _check_pair(left: FeatureMap2D, right: FeatureMap2D, spec: FrustumSpec):
    if left.data.shape != right.data.shape:
        raise DomainError(f"left {left.data.shape} and right {right.data.shape} maps differ in shape")
    if (spec.rows, spec.cols) != (left.rows, left.cols):
        raise DomainError(
            f"frustum {spec.rows}x{spec.cols} does not match feature map {left.rows}x{left.cols}"
        )


def build_psv(left: FeatureMap2D, right: FeatureMap2D, rig: StereoRig, spec: FrustumSpec,
              cfg: SweepConfig, counter: Optional[SampleCounter] = None,
              kernels=None) -> FrustumVolume:
    """Stereo plane-sweep volume with ``2 * C_V`` channels (left half first).

    Cell ``(v, u, k)`` holds the left features at feature pixel ``(u, v)`` and
    the right features bilinearly sampled at the plane's disparity.
    """
    _check_pair(left, right, spec)
    if cfg.c_in != left.channels:
        raise DomainError(f"config C_I={cfg.c_in} but maps have {left.channels} channels")
    chan = channel_map(cfg, spec.depth_planes, rig)
    data, samples = plane_sweep(left.data, right.data, right_shifts(rig, spec), chan, kernels=kernels)
    if counter is not None:
        counter.add(samples, data.shape[0] * data.shape[1] * data.shape[2])
    return FrustumVolume(spec, data)


def build_group_ps(left: FeatureMap2D, right: FeatureMap2D, rig: StereoRig, spec: FrustumSpec,
                   group_size, counter: Optional[SampleCounter] = None,
                   kernels=None) -> FrustumVolume:
    """Grouped plane sweep: even channel groups mapped to contiguous plane runs."""
    _check_pair(left, right, spec)
    chan = group_channel_map(left.channels, group_size, spec.num_planes)
    data, samples = plane_sweep(left.data, right.data, right_shifts(rig, spec), chan, kernels=kernels)
    if counter is not None:
        counter.add(samples, data.shape[0] * data.shape[1] * data.shape[2])
    return FrustumVolume(spec, data)


def stereo_views(left: FeatureMap2D, right: FeatureMap2D, rig: StereoRig):
    """[(left map, left camera), (right map, posed right camera)]."""
    lcam, rcam = rig.cameras()
    return [(left, lcam), (right, rcam)]


def build_3dgv(views: Sequence[Tuple[FeatureMap2D, CameraModel]], spec: VoxelGridSpec,
               cfg: SweepConfig, rig: StereoRig, stride=DEFAULT_STRIDE,
               counter: Optional[SampleCounter] = None, kernels=None) -> VoxelVolume:
    """3D-geometry volume by projecting voxel centers into each view.

    Every view contributes ``C_V`` channels, concatenated in view order.
    ``rig`` supplies focal length and baseline for the depth-dependent
    channel shift, which uses the voxel center's z in the rig frame. Voxels
    behind a camera or projecting outside its image get zeros for that view.
    """
    k = kernels or _backend.kernels
    if not views:
        raise DomainError("at least one view is required")
    for fmap, _ in views:
        if fmap.channels != cfg.c_in:
            raise DomainError(f"config C_I={cfg.c_in} but a map has {fmap.channels} channels")
    z = spec.centers_along(2)
    chan = channel_map(cfg, z, rig)
    cv = chan.shape[1]
    out = np.empty(spec.shape(cv * len(views)), np.float32)
    origin = np.array(spec.origin)
    vsize = np.array(spec.voxel_size)
    total = 0
    for i, (fmap, cam) in enumerate(views):
        params = np.array([cam.f_u, cam.f_v, cam.c_u, cam.c_v, float(stride)])
        total += k.sample_voxels(
            fmap.data, params, np.ascontiguousarray(cam.pose_matrix), origin, vsize, chan, out, i * cv
        )
    if counter is not None:
        counter.add(total, spec.num_voxels)
    return VoxelVolume(spec, out)
