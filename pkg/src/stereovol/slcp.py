"""Stereo-LiDAR copy-paste augmentation.

Objects are cut from source scenes as a 3D box, the LiDAR points inside it
and one image patch per view. Pasting keeps the 3D box where it was and
re-projects it with the target calibration, so the warped patches stay
aligned with the pasted points (and with each other along epipolar lines).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from stereovol.analytics import bev_intersection
from stereovol.errors import DomainError
from stereovol.geom import (
    Box3D,
    CameraModel,
    StereoRig,
    box_in_image,
    project_box,
    project_points,
)
from stereovol.grid import bilinear_sample_points

DEFAULT_COUNTS = {"Car": 5, "Pedestrian": 5, "Cyclist": 5}
DEFAULT_APPLY_PROB = 0.6
POINT_EPS = 1e-6

BBox = Tuple[float, float, float, float]


def _image(arr, name):
    a = np.array(arr, dtype=np.float32)
    if a.ndim != 3 or a.shape[2] != 3:
        raise DomainError(f"{name} must have shape (rows, cols, 3), got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise DomainError(f"{name} has non-finite values")
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class Scene:
    """A stereo frame with LiDAR points and labeled boxes.

    ``points`` is (N, 4): x, y, z in the rig (world) frame plus intensity.
    ``box_flags`` holds KITTI ``(truncated, occluded)`` per box and defaults to
    ``(0.0, 0)``.
    """

    left_image: np.ndarray
    right_image: np.ndarray
    points: np.ndarray
    rig: StereoRig
    boxes: Tuple[Box3D, ...] = ()
    box_flags: Optional[Tuple[Tuple[float, int], ...]] = None

    def __post_init__(self):
        left = _image(self.left_image, "left image")
        right = _image(self.right_image, "right image")
        if left.shape != right.shape:
            raise DomainError(f"image shapes differ: {left.shape} vs {right.shape}")
        if left.shape[:2] != self.rig.image_size:
            raise DomainError(f"images {left.shape[:2]} do not match the rig {self.rig.image_size}")
        pts = np.array(self.points, dtype=np.float64).reshape(-1, 4)
        pts.flags.writeable = False
        boxes = tuple(self.boxes)
        flags = self.box_flags
        flags = tuple((0.0, 0) for _ in boxes) if flags is None else tuple(
            (float(t), int(o)) for t, o in flags
        )
        if len(flags) != len(boxes):
            raise DomainError("box_flags must have one entry per box")
        object.__setattr__(self, "left_image", left)
        object.__setattr__(self, "right_image", right)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "boxes", boxes)
        object.__setattr__(self, "box_flags", flags)

    def same_as(self, other: "Scene") -> bool:
        """Bit-exact equality of all content."""
        return (
            self.rig == other.rig
            and self.boxes == other.boxes
            and self.box_flags == other.box_flags
            and np.array_equal(self.left_image, other.left_image)
            and np.array_equal(self.right_image, other.right_image)
            and self.points.shape == other.points.shape
            and np.array_equal(self.points, other.points)
        )


@dataclass(frozen=True, eq=False)
class ObjectSample:
    """An object cut from a source scene.

    ``patches[i]`` is the crop for view ``i`` (left, right) whose top-left
    pixel sits at ``patch_origins[i] = (col, row)`` in the source image;
    ``patch_boxes[i]`` is the projected 2D box ``(u0, v0, u1, v1)`` there.
    """

    box: Box3D
    patches: Tuple[np.ndarray, np.ndarray]
    patch_origins: Tuple[Tuple[int, int], Tuple[int, int]]
    patch_boxes: Tuple[BBox, BBox]
    object_points: np.ndarray
    source_rig: StereoRig
    source: Tuple[int, int] = (0, 0)  # (scene index, box index)

    def __post_init__(self):
        if any(p.size == 0 for p in self.patches):
            raise DomainError("object patches must be non-empty")
        if len(self.object_points) and not np.all(
            self.box.contains(self.object_points[:, :3], eps=POINT_EPS)
        ):
            raise DomainError("object points must lie inside the box")


@dataclass
class ObjectBank:
    samples: Dict[str, List[ObjectSample]] = field(default_factory=dict)
    skipped: int = 0

    def __len__(self):
        return sum(len(v) for v in self.samples.values())


def _crop(image, bbox: BBox):
    x0, y0 = int(math.floor(bbox[0])), int(math.floor(bbox[1]))
    x1, y1 = int(math.ceil(bbox[2])), int(math.ceil(bbox[3]))
    return image[y0:y1 + 1, x0:x1 + 1].copy(), (x0, y0)


def build_bank(scenes: Sequence[Scene]) -> ObjectBank:
    """Collect every labeled box whose 8 corners project inside both images."""
    bank = ObjectBank()
    for si, scene in enumerate(scenes):
        cams = scene.rig.cameras()
        images = (scene.left_image, scene.right_image)
        for bi, box in enumerate(scene.boxes):
            if not all(box_in_image(c, box) for c in cams):
                bank.skipped += 1
                continue
            patches, origins, bboxes = [], [], []
            for cam, img in zip(cams, images):
                bb = project_box(cam, box).bbox
                patch, origin = _crop(img, bb)
                patches.append(patch)
                origins.append(origin)
                bboxes.append(bb)
            inside = box.contains(scene.points[:, :3], eps=POINT_EPS)
            sample = ObjectSample(
                box=box,
                patches=tuple(patches),
                patch_origins=tuple(origins),
                patch_boxes=tuple(bboxes),
                object_points=scene.points[inside].copy(),
                source_rig=scene.rig,
                source=(si, bi),
            )
            bank.samples.setdefault(box.class_id, []).append(sample)
    return bank


def sample_objects(bank: ObjectBank, counts: Optional[Dict[str, int]] = None, seed=0) -> List[ObjectSample]:
    """Draw up to ``counts[cls]`` samples per class without replacement."""
    counts = DEFAULT_COUNTS if counts is None else counts
    rng = np.random.default_rng(seed)
    out = []
    for cls, n in counts.items():
        pool = bank.samples.get(cls, [])
        n = min(int(n), len(pool))
        if n <= 0:
            continue
        out.extend(pool[i] for i in rng.choice(len(pool), size=n, replace=False))
    return out


def warp_patch(image: np.ndarray, patch: np.ndarray, origin, src: BBox, dst: BBox,
               dst_clipped: BBox, kernels=None) -> np.ndarray:
    """Paint ``patch`` onto ``image`` by an axis-aligned affine from ``src`` to ``dst``.

    Integer pixels inside ``dst_clipped`` are filled with bilinear samples of
    the source region; ``image`` is modified in place and returned.
    """
    xs = np.arange(math.ceil(dst_clipped[0]), math.floor(dst_clipped[2]) + 1, dtype=np.float64)
    ys = np.arange(math.ceil(dst_clipped[1]), math.floor(dst_clipped[3]) + 1, dtype=np.float64)
    dw, dh = dst[2] - dst[0], dst[3] - dst[1]
    if not (len(xs) and len(ys)) or dw <= 0 or dh <= 0:
        return image
    sx = src[0] + (xs - dst[0]) * ((src[2] - src[0]) / dw) - origin[0]
    sy = src[1] + (ys - dst[1]) * ((src[3] - src[1]) / dh) - origin[1]
    # Keep samples inside the crop so border pixels never fade to zero.
    sx = np.clip(sx, 0.0, patch.shape[1] - 1.0)
    sy = np.clip(sy, 0.0, patch.shape[0] - 1.0)
    gy, gx = np.meshgrid(sy, sx, indexing="ij")
    vals = bilinear_sample_points(patch, np.stack([gx.ravel(), gy.ravel()], axis=1), kernels)
    r0, c0 = int(ys[0]), int(xs[0])
    image[r0:r0 + len(ys), c0:c0 + len(xs)] = vals.reshape(len(ys), len(xs), -1)
    return image


def _inside_bbox(uv, bb: BBox):
    return (uv[:, 0] >= bb[0]) & (uv[:, 0] <= bb[2]) & (uv[:, 1] >= bb[1]) & (uv[:, 1] <= bb[3])


@dataclass(frozen=True, eq=False)
class PasteResult:
    scene: Scene
    applied: bool
    accepted: Tuple[ObjectSample, ...] = ()
    rejected: Tuple[Tuple[ObjectSample, str], ...] = ()
    # Clipped target boxes (left, right) of accepted samples, in paste order.
    target_boxes: Tuple[Tuple[BBox, BBox], ...] = ()


def paste(target: Scene, samples: Sequence[ObjectSample], seed=0,
          apply_prob=DEFAULT_APPLY_PROB, kernels=None) -> PasteResult:
    """Paste object samples into ``target`` with probability ``apply_prob``.

    Samples go far to near. A sample is rejected when its footprint overlaps
    an existing or already pasted box, when a corner lies behind either
    camera, or when it projects outside an image. Points projecting into a
    pasted target box in either view are removed before the object's own
    points are added, so earlier (farther) pastes lose their occluded points
    too.
    """
    if not 0.0 <= apply_prob <= 1.0:
        raise DomainError(f"apply_prob must lie in [0, 1], got {apply_prob}")
    rng = np.random.default_rng(seed)
    if not rng.random() < apply_prob:
        return PasteResult(target, False)
    cams = target.rig.cameras()
    images = [target.left_image.copy(), target.right_image.copy()]
    points = target.points
    boxes = list(target.boxes)
    flags = list(target.box_flags)
    accepted, rejected, targets = [], [], []
    order = sorted(range(len(samples)), key=lambda i: -samples[i].box.center[2])
    for i in order:
        sample = samples[i]
        box = sample.box
        if any(bev_intersection(box, b) > 0.0 for b in boxes):
            rejected.append((sample, "overlap"))
            continue
        try:
            projected = [project_box(c, box) for c in cams]
        except DomainError:
            rejected.append((sample, "behind_camera"))
            continue
        if any(p.empty for p in projected):
            rejected.append((sample, "out_of_image"))
            continue
        for view in range(2):
            p = projected[view]
            warp_patch(images[view], sample.patches[view], sample.patch_origins[view],
                       sample.patch_boxes[view], p.bbox_unclipped, p.bbox, kernels)
        keep = np.ones(len(points), dtype=bool)
        for cam, p in zip(cams, projected):
            uv, z = project_points(cam, points[:, :3])
            keep &= ~((z > 0) & _inside_bbox(uv, p.bbox))
        points = np.concatenate([points[keep], sample.object_points], axis=0)
        boxes.append(box)
        flags.append((0.0, 0))
        accepted.append(sample)
        targets.append((projected[0].bbox, projected[1].bbox))
    scene = Scene(images[0], images[1], points, target.rig, tuple(boxes), tuple(flags))
    return PasteResult(scene, True, tuple(accepted), tuple(rejected), tuple(targets))


_MIRROR = np.diag([-1.0, 1.0, 1.0])


def _mirror_yaw(yaw):
    # pi - yaw, kept in (-pi, pi] without a wrap so the map is its own inverse.
    return math.pi - yaw if yaw >= 0 else -math.pi - yaw


def hflip(scene: Scene) -> Scene:
    """Horizontal flip that keeps the pair a valid rectified rig.

    The mirrored right image becomes the new left image and vice versa;
    the world frame is mirrored in x. Applying it twice restores the scene
    bit for bit whenever yaw, principal points, baseline and pose
    translation are dyadic rationals (as in the synthetic generator).
    """
    rig = scene.rig
    w = rig.left.image_width
    m = rig.left.pose_matrix
    rot = _MIRROR @ m[:, :3] @ _MIRROR
    trans = _MIRROR @ m[:, 3]
    trans[0] += rig.baseline
    new_left = replace(rig.right, c_u=(w - 1) - rig.right.c_u).with_pose(np.hstack([rot, trans[:, None]]))
    new_right = replace(rig.left, c_u=(w - 1) - rig.left.c_u, pose=None)
    new_rig = StereoRig(new_left, new_right, rig.baseline)
    pts = scene.points.copy()
    pts[:, 0] = -pts[:, 0]
    boxes = tuple(
        replace(b, center=(-b.center[0], b.center[1], b.center[2]), yaw=_mirror_yaw(b.yaw))
        for b in scene.boxes
    )
    return Scene(
        scene.right_image[:, ::-1],
        scene.left_image[:, ::-1],
        pts,
        new_rig,
        boxes,
        scene.box_flags,
    )
