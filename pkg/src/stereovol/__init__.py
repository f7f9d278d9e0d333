"""Geometric core of a stereo 3D-detection pipeline.

Plane-sweep and 3D-geometry volume construction (including depth-wise
channel windows), frustum/voxel resampling, stereo-LiDAR copy-paste
augmentation, evaluation metrics and KITTI-format I/O.
"""

from stereovol.errors import DomainError, FormatError, ParseError
from stereovol.geom import Box3D, CameraModel, StereoRig, make_rig
from stereovol.grid import FeatureMap2D, FrustumSpec, FrustumVolume, VoxelGridSpec, VoxelVolume
from stereovol.sweep import SweepConfig, build_3dgv, build_group_ps, build_psv, cyclic_slice

__all__ = [
    "Box3D",
    "CameraModel",
    "DomainError",
    "FeatureMap2D",
    "FormatError",
    "FrustumSpec",
    "FrustumVolume",
    "ParseError",
    "StereoRig",
    "SweepConfig",
    "VoxelGridSpec",
    "VoxelVolume",
    "build_3dgv",
    "build_group_ps",
    "build_psv",
    "cyclic_slice",
    "make_rig",
]
