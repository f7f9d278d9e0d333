"""Evaluation and analysis metrics.

* voxel occupancy of object boxes in frustum and metric volumes
* foreground depth error inside object boxes, binned by depth
* rotated BEV / 3D IoU via convex polygon clipping
* average precision at 40 recall positions (AP|R40)
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from stereovol.errors import DomainError
from stereovol.geom import Box3D, CameraModel, project_points, unproject_points
from stereovol.grid import FrustumSpec, VoxelGridSpec

OCCUPANCY_CAP = 600
RECALL_POSITIONS = 40

# Minimum IoU for a true positive, per class.
IOU_THRESHOLDS = {"Car": 0.7, "Pedestrian": 0.5, "Cyclist": 0.5}

# KITTI difficulty levels: (min 2D box height px, max occlusion level, max truncation).
DIFFICULTY = {
    "easy": (40.0, 0, 0.15),
    "moderate": (25.0, 1, 0.30),
    "hard": (25.0, 2, 0.50),
}


# ---------------------------------------------------------------- occupancy


@dataclass(frozen=True)
class OccupancyRecord:
    class_id: str
    depth: float
    psv_count: int
    tdgv_count: int


def occupancy_voxel(box: Box3D, vspec: VoxelGridSpec) -> int:
    """Number of voxel centers inside ``box``."""
    corners = box.corners()
    lo = np.floor(vspec.fractional_index(corners.min(axis=0))).astype(int) - 1
    hi = np.ceil(vspec.fractional_index(corners.max(axis=0))).astype(int) + 1
    lo = np.maximum(lo, 0)
    hi = np.minimum(hi, np.array(vspec.dims) - 1)
    if np.any(hi < lo):
        return 0
    axes = [
        vspec.origin[a] + (np.arange(lo[a], hi[a] + 1) + 0.5) * vspec.voxel_size[a] for a in range(3)
    ]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
    return int(box.contains(pts).sum())


def occupancy_frustum(box: Box3D, fspec: FrustumSpec, cam: CameraModel) -> int:
    """Number of frustum cells whose center, unprojected, lies inside ``box``.

    Cell ``(v, u, k)`` is sampled at image pixel ``((u + 0.5) * stride,
    (v + 0.5) * stride)`` and depth plane ``k``.
    """
    uv, z = project_points(cam, box.corners())
    planes = fspec.planes
    rows = np.arange(fspec.rows)
    cols = np.arange(fspec.cols)
    if np.all(z > 0):
        # Interior points project inside the corners' hull and depth range.
        fu = uv[:, 0] / fspec.stride - 0.5
        fv = uv[:, 1] / fspec.stride - 0.5
        cols = cols[(cols >= math.floor(fu.min()) - 1) & (cols <= math.ceil(fu.max()) + 1)]
        rows = rows[(rows >= math.floor(fv.min()) - 1) & (rows <= math.ceil(fv.max()) + 1)]
        planes = planes[(planes >= z.min() - 1e-6) & (planes <= z.max() + 1e-6)]
    if not (len(rows) and len(cols) and len(planes)):
        return 0
    v, u, d = np.meshgrid(
        (rows + 0.5) * fspec.stride, (cols + 0.5) * fspec.stride, planes, indexing="ij"
    )
    pts = unproject_points(cam, u, v, d).reshape(-1, 3)
    return int(box.contains(pts).sum())


def occupancy(box: Box3D, spec, cam: Optional[CameraModel] = None) -> int:
    """Dispatch to :func:`occupancy_frustum` (needs ``cam``) or :func:`occupancy_voxel`."""
    if isinstance(spec, FrustumSpec):
        if cam is None:
            raise DomainError("frustum occupancy needs a camera")
        return occupancy_frustum(box, spec, cam)
    return occupancy_voxel(box, spec)


def occupancy_profile(scenes: Iterable, fspec: FrustumSpec, vspec: VoxelGridSpec) -> List[OccupancyRecord]:
    """One record per labeled box over scenes (anything with ``.rig`` and ``.boxes``)."""
    records = []
    for scene in scenes:
        cam = scene.rig.left
        for box in scene.boxes:
            records.append(
                OccupancyRecord(
                    box.class_id,
                    box.center[2],
                    occupancy_frustum(box, fspec, cam),
                    occupancy_voxel(box, vspec),
                )
            )
    return records


def capped(record: OccupancyRecord, cap=OCCUPANCY_CAP) -> OccupancyRecord:
    return OccupancyRecord(record.class_id, record.depth, min(record.psv_count, cap),
                           min(record.tdgv_count, cap))


def aggregate_profile(records: Sequence[OccupancyRecord], bin_m=5.0, cap=OCCUPANCY_CAP):
    """Per-class mean counts in depth bins of ``bin_m`` meters.

    Returns dicts with keys class, bin_lo, bin_hi, mean_psv, mean_tdgv, count;
    means are capped at ``cap``.
    """
    groups = {}
    for r in records:
        b = math.floor(r.depth / bin_m)
        groups.setdefault((r.class_id, b), []).append(r)
    rows = []
    for (cls, b), rs in sorted(groups.items()):
        rows.append(
            {
                "class": cls,
                "bin_lo": b * bin_m,
                "bin_hi": (b + 1) * bin_m,
                "mean_psv": min(float(np.mean([r.psv_count for r in rs])), cap),
                "mean_tdgv": min(float(np.mean([r.tdgv_count for r in rs])), cap),
                "count": len(rs),
            }
        )
    return rows


def write_profile_csv(records: Sequence[OccupancyRecord], fh, cap=OCCUPANCY_CAP):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["class", "depth_m", "psv_count", "tdgv_count"])
    for r in records:
        r = capped(r, cap)
        w.writerow([r.class_id, f"{r.depth:.6f}", r.psv_count, r.tdgv_count])


# ---------------------------------------------------------- depth error


@dataclass(frozen=True)
class DepthErrorBin:
    lo: float
    hi: float
    mae: Optional[float]  # None when the bin has no pixels
    pixels: int


@dataclass(frozen=True)
class DepthErrorReport:
    bins: Tuple[DepthErrorBin, ...]
    overall: Optional[float]
    pixels: int


def foreground_mask(gt, boxes: Sequence[Box3D], cam: CameraModel) -> np.ndarray:
    """Pixels whose ground-truth depth point falls inside any box."""
    vals = gt.values
    mask = np.zeros(vals.shape, dtype=bool)
    vv, uu = np.nonzero(vals > 0)
    if not len(vv) or not boxes:
        return mask
    pts = unproject_points(cam, uu.astype(float), vv.astype(float), vals[vv, uu])
    inside = np.zeros(len(pts), dtype=bool)
    for box in boxes:
        inside |= box.contains(pts)
    mask[vv[inside], uu[inside]] = True
    return mask


def foreground_depth_error(pred, gt, boxes: Sequence[Box3D], cam: CameraModel,
                           depth_bins: Sequence[float]) -> DepthErrorReport:
    """Mean absolute depth error of foreground pixels, binned by ground-truth depth.

    ``depth_bins`` are bin edges; a pixel with depth ``d`` falls in
    ``[edge_i, edge_{i+1})``. Empty bins report ``mae=None``.
    """
    if pred.shape != gt.shape:
        raise DomainError(f"shape mismatch {pred.shape} vs {gt.shape}")
    edges = [float(e) for e in depth_bins]
    if len(edges) < 2 or any(b <= a for a, b in zip(edges, edges[1:])):
        raise DomainError("depth bins need at least two strictly increasing edges")
    fg = foreground_mask(gt, boxes, cam)
    d = gt.values[fg]
    err = np.abs(pred.values[fg] - d)
    bins = []
    for lo, hi in zip(edges, edges[1:]):
        sel = (d >= lo) & (d < hi)
        n = int(sel.sum())
        bins.append(DepthErrorBin(lo, hi, float(err[sel].mean()) if n else None, n))
    inside = (d >= edges[0]) & (d < edges[-1])
    n = int(inside.sum())
    return DepthErrorReport(tuple(bins), float(err[inside].mean()) if n else None, n)


def write_depth_error_csv(report: DepthErrorReport, fh):
    """One row per populated bin; empty bins are omitted."""
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["bin_lo", "bin_hi", "mae_m", "pixels"])
    for b in report.bins:
        if b.mae is not None:
            w.writerow([f"{b.lo:g}", f"{b.hi:g}", f"{b.mae:.6f}", b.pixels])


# --------------------------------------------------------------------- IoU


def polygon_area(poly) -> float:
    """Signed shoelace area (positive for counter-clockwise in x-right, y-up axes)."""
    p = np.asarray(poly, dtype=np.float64)
    if len(p) < 3:
        return 0.0
    x, y = p[:, 0], p[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def _ccw(poly):
    p = np.asarray(poly, dtype=np.float64)
    return p if polygon_area(p) >= 0 else p[::-1]


def clip_convex(subject, clip) -> np.ndarray:
    """Sutherland-Hodgman intersection of two convex polygons."""
    out = [tuple(p) for p in _ccw(subject)]
    c = _ccw(clip)
    for i in range(len(c)):
        if not out:
            break
        a, b = c[i], c[(i + 1) % len(c)]
        ex, ey = b[0] - a[0], b[1] - a[1]

        def side(p):
            return ex * (p[1] - a[1]) - ey * (p[0] - a[0])

        inp, out = out, []
        for j in range(len(inp)):
            p, q = inp[j], inp[(j + 1) % len(inp)]
            sp, sq = side(p), side(q)
            if sp >= 0:
                out.append(p)
            if (sp >= 0) != (sq >= 0):
                t = sp / (sp - sq)
                out.append((p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])))
    return np.array(out, dtype=np.float64).reshape(-1, 2)


def bev_intersection(a: Box3D, b: Box3D) -> float:
    return abs(polygon_area(clip_convex(a.bev_corners(), b.bev_corners())))


def iou_bev(a: Box3D, b: Box3D) -> float:
    """IoU of the two boxes' footprints in the x-z plane."""
    inter = bev_intersection(a, b)
    area_a = a.size[0] * a.size[1]
    area_b = b.size[0] * b.size[1]
    return float(min(max(inter / (area_a + area_b - inter), 0.0), 1.0))


def iou_3d(a: Box3D, b: Box3D) -> float:
    """Volume IoU: BEV intersection times vertical overlap."""
    ya0, ya1 = a.center[1] - a.size[2] / 2, a.center[1] + a.size[2] / 2
    yb0, yb1 = b.center[1] - b.size[2] / 2, b.center[1] + b.size[2] / 2
    dy = min(ya1, yb1) - max(ya0, yb0)
    if dy <= 0:
        return 0.0
    inter = bev_intersection(a, b) * dy
    return float(min(max(inter / (a.volume + b.volume - inter), 0.0), 1.0))


# ---------------------------------------------------------------------- AP


@dataclass(frozen=True)
class Detection:
    box: Box3D
    score: float

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise DomainError(f"score must lie in [0, 1], got {self.score}")

    @property
    def class_id(self):
        return self.box.class_id


IouFn = Callable[[Box3D, Box3D], float]


def match_frame(dets: Sequence[Detection], gts: Sequence[Box3D], iou_fn: IouFn,
                threshold: float) -> List[Tuple[float, bool]]:
    """Greedy matching in descending score; returns ``(score, is_tp)`` in that order.

    Each detection takes the unmatched ground truth of highest IoU (ties to
    the lowest index) provided the IoU reaches ``threshold``. Equal scores
    keep input order.
    """
    order = sorted(range(len(dets)), key=lambda i: -dets[i].score)
    taken = [False] * len(gts)
    result = []
    for i in order:
        best, best_iou = -1, -1.0
        for j, g in enumerate(gts):
            if taken[j]:
                continue
            iou = iou_fn(dets[i].box, g)
            if iou >= threshold and iou > best_iou:
                best, best_iou = j, iou
        if best >= 0:
            taken[best] = True
        result.append((dets[i].score, best >= 0))
    return result


def pr_curve(frames, iou_fn: IouFn, threshold: float):
    """Precision/recall at every distinct score threshold, descending.

    ``frames`` is a sequence of ``(detections, ground_truths)`` pairs; matching
    happens per frame, the curve is pooled.
    """
    n_gt = sum(len(g) for _, g in frames)
    if n_gt == 0:
        raise DomainError("AP is undefined without ground-truth boxes")
    matched = []
    for dets, gts in frames:
        matched.extend(match_frame(dets, gts, iou_fn, threshold))
    matched.sort(key=lambda m: -m[0])
    precision, recall = [], []
    tp = fp = 0
    for i, (score, is_tp) in enumerate(matched):
        if is_tp:
            tp += 1
        else:
            fp += 1
        if i + 1 == len(matched) or matched[i + 1][0] != score:
            precision.append(tp / (tp + fp))
            recall.append(tp / n_gt)
    return precision, recall


def ap_from_curve(precision, recall, positions=RECALL_POSITIONS) -> float:
    """Mean interpolated precision at recall ``1/positions, ..., 1``."""
    samples = []
    for i in range(1, positions + 1):
        r = i / positions
        reachable = [p for p, rc in zip(precision, recall) if rc >= r]
        samples.append(max(reachable) if reachable else 0.0)
    return math.fsum(samples) / positions


def ap_r40_frames(frames, iou_fn: IouFn = iou_3d, threshold=0.7) -> float:
    precision, recall = pr_curve(frames, iou_fn, threshold)
    return ap_from_curve(precision, recall)


def ap_r40(dets: Sequence[Detection], gts: Sequence[Box3D], iou_fn: IouFn = iou_3d,
           threshold=0.7) -> float:
    """AP|R40 for a single frame; see :func:`ap_r40_frames` for pooled evaluation."""
    return ap_r40_frames([(dets, gts)], iou_fn, threshold)


def passes_difficulty(bbox_height, occluded, truncated, level) -> bool:
    """KITTI difficulty pre-filter on label fields; ``level=None`` accepts everything."""
    if level is None:
        return True
    min_h, max_occ, max_trunc = DIFFICULTY[level]
    return bbox_height >= min_h and occluded <= max_occ and truncated <= max_trunc
