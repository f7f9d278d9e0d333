"""KITTI-format I/O, the DVOL volume format and a synthetic scene generator.

KITTI conventions used here:

* the world frame is the rectified reference camera (``R0_rect`` applied);
  label locations and transformed velodyne points live in it;
* ``P2``/``P3`` are the left/right color cameras, ``P = K [I | t]``;
* label ``location`` is the box bottom center, dimensions are ``h w l``.
"""

from __future__ import annotations

import hashlib
import io
import math
import os
import struct
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from PIL import Image

from stereovol.analytics import bev_intersection
from stereovol.dualview import DepthMap
from stereovol.errors import DomainError, FormatError, ParseError
from stereovol.geom import (
    Box3D,
    CameraModel,
    StereoRig,
    box_in_image,
    normalize_yaw,
    project_box,
    project_points,
)
from stereovol.grid import FeatureMap2D, FrustumSpec, FrustumVolume, VoxelGridSpec, VoxelVolume
from stereovol.slcp import Scene

# ------------------------------------------------------------ calibration

CALIB_KEYS = {"P2": 12, "P3": 12, "R0_rect": 9, "Tr_velo_to_cam": 12}


def _num(tok, what, line=None, key=None):
    try:
        return float(tok)
    except ValueError:
        raise ParseError(f"{what}: not a number: {tok!r}", key=key, line=line) from None


@dataclass(frozen=True, eq=False)
class Calibration:
    P_left: np.ndarray  # 3x4 (P2)
    P_right: np.ndarray  # 3x4 (P3)
    R0_rect: np.ndarray  # 3x3
    Tr_velo_to_cam: np.ndarray  # 3x4

    def __post_init__(self):
        for name, shape in (("P_left", (3, 4)), ("P_right", (3, 4)), ("R0_rect", (3, 3)),
                            ("Tr_velo_to_cam", (3, 4))):
            m = np.array(getattr(self, name), dtype=np.float64)
            if m.shape != shape:
                raise DomainError(f"{name} must be {shape}, got {m.shape}")
            object.__setattr__(self, name, m)
        for name in ("P_left", "P_right"):
            p = getattr(self, name)
            if not (p[0, 0] > 0 and p[1, 1] > 0):
                raise DomainError(f"{name} needs positive focal lengths")
        if not self.baseline > 0:
            raise DomainError(f"derived baseline must be positive, got {self.baseline}")

    @staticmethod
    def _translation(p):
        # t = K^-1 P[:, 3] for K = [[f_u, 0, c_u], [0, f_v, c_v], [0, 0, 1]].
        tz = p[2, 3]
        return np.array([(p[0, 3] - p[0, 2] * tz) / p[0, 0], (p[1, 3] - p[1, 2] * tz) / p[1, 1], tz])

    @property
    def baseline(self):
        """Right camera offset along -x in meters; ``(P2[0,3] - P3[0,3]) / f_u`` when t_z = 0."""
        return float(self._translation(self.P_left)[0] - self._translation(self.P_right)[0])

    def rig(self, width, height) -> StereoRig:
        pl, pr = self.P_left, self.P_right
        t = self._translation(pl)
        left = CameraModel(pl[0, 0], pl[1, 1], pl[0, 2], pl[1, 2], width, height).with_pose(
            np.hstack([np.eye(3), t[:, None]])
        )
        right = CameraModel(pr[0, 0], pr[1, 1], pr[0, 2], pr[1, 2], width, height)
        return StereoRig(left, right, self.baseline)

    @classmethod
    def from_rig(cls, rig: StereoRig, tr_velo_to_cam=None, r0_rect=None) -> "Calibration":
        """Inverse of :meth:`rig` for a rig whose left pose is a pure translation."""
        m = rig.left.pose_matrix
        if not np.array_equal(m[:, :3], np.eye(3)):
            raise DomainError("KITTI projection matrices need an axis-aligned left pose")
        t = m[:, 3]
        pl = rig.left.K @ np.hstack([np.eye(3), t[:, None]])
        pr = rig.right.K @ np.hstack([np.eye(3), (t - [rig.baseline, 0, 0])[:, None]])
        tr = np.hstack([np.eye(3), np.zeros((3, 1))]) if tr_velo_to_cam is None else tr_velo_to_cam
        return cls(pl, pr, np.eye(3) if r0_rect is None else r0_rect, tr)

    def velo_to_rect(self, xyz):
        return (np.asarray(xyz, np.float64) @ self.Tr_velo_to_cam[:, :3].T
                + self.Tr_velo_to_cam[:, 3]) @ self.R0_rect.T

    def rect_to_velo(self, xyz):
        cam = np.asarray(xyz, np.float64) @ np.linalg.inv(self.R0_rect).T
        return (cam - self.Tr_velo_to_cam[:, 3]) @ np.linalg.inv(self.Tr_velo_to_cam[:, :3]).T


def parse_calib(text: str) -> Calibration:
    """Parse a KITTI calibration file (``KEY: v1 v2 ...`` per line)."""
    values: Dict[str, List[float]] = {}
    for n, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        key, sep, rest = line.partition(":")
        if not sep:
            raise ParseError(f"line {n}: expected 'KEY: values'", line=n)
        key = key.strip()
        values[key] = [_num(t, f"line {n}", line=n, key=key) for t in rest.split()]
    # Some devkit exports name the rectification / velodyne entries differently.
    for alias, key in (("R_rect", "R0_rect"), ("Tr_velo_cam", "Tr_velo_to_cam")):
        if key not in values and alias in values:
            values[key] = values[alias]
    for key, count in CALIB_KEYS.items():
        if key not in values:
            raise ParseError(f"missing calibration entry {key}", key=key)
        if len(values[key]) != count:
            raise ParseError(f"{key}: expected {count} values, got {len(values[key])}", key=key)
    return Calibration(
        np.reshape(values["P2"], (3, 4)),
        np.reshape(values["P3"], (3, 4)),
        np.reshape(values["R0_rect"], (3, 3)),
        np.reshape(values["Tr_velo_to_cam"], (3, 4)),
    )


def _fmt(values) -> str:
    return " ".join(repr(float(v)) for v in np.ravel(values))


def format_calib(calib: Calibration) -> str:
    return (
        f"P2: {_fmt(calib.P_left)}\n"
        f"P3: {_fmt(calib.P_right)}\n"
        f"R0_rect: {_fmt(calib.R0_rect)}\n"
        f"Tr_velo_to_cam: {_fmt(calib.Tr_velo_to_cam)}\n"
    )


# ---------------------------------------------------------------- labels


@dataclass(frozen=True)
class Label:
    """One KITTI label row with its raw fields."""

    type: str
    truncated: float
    occluded: int
    alpha: float
    bbox: Tuple[float, float, float, float]
    dimensions: Tuple[float, float, float]  # h, w, l
    location: Tuple[float, float, float]  # bottom center
    rotation_y: float
    score: Optional[float] = None

    @property
    def box(self) -> Box3D:
        h, w, l = self.dimensions
        x, y, z = self.location
        return Box3D((x, y - h / 2.0, z), (l, w, h), self.rotation_y, self.type, self.score)

    @property
    def bbox_height(self):
        return self.bbox[3] - self.bbox[1]

    @classmethod
    def from_box(cls, box: Box3D, cam: Optional[CameraModel] = None, truncated=0.0, occluded=0):
        """Label for ``box``; the 2D box comes from projecting into ``cam`` when given."""
        l, w, h = box.size
        x, y, z = box.center
        bbox = (0.0, 0.0, 0.0, 0.0)
        if cam is not None:
            try:
                bbox = project_box(cam, box).bbox
            except DomainError:
                pass
        alpha = normalize_yaw(box.yaw - math.atan2(x, z))
        return cls(box.class_id, float(truncated), int(occluded), alpha, tuple(bbox), (h, w, l),
                   (x, y + h / 2.0, z), box.yaw, box.score)


def parse_labels(text: str) -> List[Label]:
    """Parse KITTI label rows; ``DontCare`` rows are skipped, a 16th field is the score."""
    labels = []
    for n, line in enumerate(text.splitlines(), 1):
        tok = line.split()
        if not tok:
            continue
        if len(tok) not in (15, 16):
            raise ParseError(f"line {n}: expected 15 or 16 fields, got {len(tok)}", line=n)
        if tok[0] == "DontCare":
            continue
        v = [_num(t, f"line {n}", line=n) for t in tok[1:]]
        if v[1] != int(v[1]):
            raise ParseError(f"line {n}: occlusion must be an integer", line=n)
        labels.append(
            Label(tok[0], v[0], int(v[1]), v[2], tuple(v[3:7]), tuple(v[7:10]), tuple(v[10:13]),
                  v[13], v[14] if len(v) == 15 else None)
        )
    return labels


def format_labels(labels: Sequence[Label]) -> str:
    lines = []
    for lb in labels:
        fields = [lb.type, repr(float(lb.truncated)), str(int(lb.occluded)), repr(float(lb.alpha)),
                  _fmt(lb.bbox), _fmt(lb.dimensions), _fmt(lb.location), repr(float(lb.rotation_y))]
        if lb.score is not None:
            fields.append(repr(float(lb.score)))
        lines.append(" ".join(fields) + "\n")
    return "".join(lines)


# -------------------------------------------------------- velodyne / depth


def read_velodyne(data: bytes, calib: Optional[Calibration] = None) -> np.ndarray:
    """Decode little-endian float32 ``(x, y, z, intensity)`` records into an (N, 4) array.

    With ``calib`` the coordinates are mapped into the rectified camera frame.
    """
    if len(data) % 16:
        raise FormatError(f"velodyne payload of {len(data)} bytes is not a multiple of 16")
    pts = np.frombuffer(data, dtype="<f4").reshape(-1, 4).astype(np.float64)
    if calib is not None and len(pts):
        pts[:, :3] = calib.velo_to_rect(pts[:, :3])
    return pts


def write_velodyne(points, calib: Optional[Calibration] = None) -> bytes:
    pts = np.array(points, dtype=np.float64).reshape(-1, 4)
    if calib is not None and len(pts):
        pts[:, :3] = calib.rect_to_velo(pts[:, :3])
    return pts.astype("<f4").tobytes()


def gt_depth(points, cam: CameraModel, size: Optional[Tuple[int, int]] = None) -> DepthMap:
    """Sparse depth map from points: nearest depth per rounded pixel, 0 elsewhere.

    ``size`` is ``(rows, cols)`` and defaults to the camera's image size.
    Pixel assignment rounds half up: ``floor(u + 0.5)``.
    """
    rows, cols = size if size is not None else (cam.image_height, cam.image_width)
    depth = np.full(rows * cols, np.inf)
    pts = np.asarray(points, dtype=np.float64)
    if len(pts):
        uv, z = project_points(cam, pts[:, :3])
        ok = z > 0
        uv, z = uv[ok], z[ok]
        u = np.floor(uv[:, 0] + 0.5)
        v = np.floor(uv[:, 1] + 0.5)
        inb = (u >= 0) & (u < cols) & (v >= 0) & (v < rows)
        flat = (v[inb] * cols + u[inb]).astype(np.int64)
        np.minimum.at(depth, flat, z[inb])
    depth[np.isinf(depth)] = 0.0
    return DepthMap(depth.reshape(rows, cols))


# ------------------------------------------------------------------ DVOL

DVOL_MAGIC = b"DVOL"
DVOL_VERSION = 1
TAG_FRUSTUM, TAG_VOXEL, TAG_MAP2D = 0, 1, 2


def _dvol_parts(volume):
    if isinstance(volume, FrustumVolume):
        tag = TAG_FRUSTUM
        s = volume.spec
        scalars = [float(s.stride), float(s.num_planes), *s.depth_planes]
    elif isinstance(volume, VoxelVolume):
        tag = TAG_VOXEL
        s = volume.spec
        scalars = [*s.origin, *s.voxel_size, *(float(n) for n in s.dims)]
    elif isinstance(volume, FeatureMap2D):
        tag = TAG_MAP2D
        scalars = []
    else:
        raise DomainError(f"cannot serialize {type(volume).__name__}")
    data = np.ascontiguousarray(volume.data, dtype="<f4")
    buf = io.BytesIO()
    buf.write(DVOL_MAGIC)
    buf.write(struct.pack("<BI", DVOL_VERSION, data.ndim))
    buf.write(struct.pack(f"<{data.ndim}I", *data.shape))
    buf.write(struct.pack("<B", tag))
    buf.write(struct.pack(f"<{len(scalars)}d", *scalars))
    return buf.getvalue(), data


def write_dvol(volume) -> bytes:
    """Serialize a FrustumVolume, VoxelVolume or FeatureMap2D."""
    header, data = _dvol_parts(volume)
    return header + data.tobytes()


def write_dvol_file(path, volume) -> str:
    """Atomically write a DVOL file without an in-memory copy; returns its sha256 hex."""
    header, data = _dvol_parts(volume)
    digest = hashlib.sha256(header)
    payload = memoryview(data.reshape(-1)).cast("B")
    step = 1 << 24
    for i in range(0, len(payload), step):
        digest.update(payload[i:i + step])
    _atomic(path, lambda fh: (fh.write(header), fh.write(payload)))
    return digest.hexdigest()


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, fmt):
        n = struct.calcsize(fmt)
        if self.pos + n > len(self.data):
            raise FormatError("DVOL payload is truncated")
        out = struct.unpack_from(fmt, self.data, self.pos)
        self.pos += n
        return out


def read_dvol(data: bytes):
    """Inverse of :func:`write_dvol`."""
    r = _Reader(data)
    if r.take("4s")[0] != DVOL_MAGIC:
        raise FormatError("not a DVOL payload (bad magic)")
    version, rank = r.take("<BI")
    if version != DVOL_VERSION:
        raise FormatError(f"unsupported DVOL version {version}")
    if rank > 8:
        raise FormatError(f"implausible DVOL rank {rank}")
    dims = r.take(f"<{rank}I")
    (tag,) = r.take("<B")
    expected_rank = {TAG_FRUSTUM: 4, TAG_VOXEL: 4, TAG_MAP2D: 3}
    if tag not in expected_rank:
        raise FormatError(f"unknown DVOL space tag {tag}")
    if rank != expected_rank[tag]:
        raise FormatError(f"space tag {tag} needs rank {expected_rank[tag]}, got {rank}")
    if tag == TAG_FRUSTUM:
        stride, count = r.take("<2d")
        if count != int(count) or int(count) != dims[2]:
            raise FormatError("depth plane count does not match the volume dims")
        planes = r.take(f"<{int(count)}d")
    elif tag == TAG_VOXEL:
        vals = r.take("<9d")
        if tuple(int(v) for v in vals[6:]) != tuple(dims[:3]):
            raise FormatError("voxel dims do not match the volume dims")
    n = int(np.prod(dims, dtype=np.int64)) * 4
    if len(data) - r.pos != n:
        raise FormatError(f"DVOL data size {len(data) - r.pos} bytes, expected {n}")
    arr = np.frombuffer(data, dtype="<f4", offset=r.pos).reshape(dims).astype(np.float32)
    try:
        if tag == TAG_FRUSTUM:
            return FrustumVolume(FrustumSpec(dims[0], dims[1], stride, planes), arr)
        if tag == TAG_VOXEL:
            return VoxelVolume(VoxelGridSpec(vals[0:3], vals[3:6], dims[:3]), arr)
        return FeatureMap2D(arr)
    except DomainError as e:
        raise FormatError(f"invalid DVOL content: {e}") from None


# ------------------------------------------------------------------ PNG


def encode_depth_png(depth: DepthMap) -> bytes:
    """16-bit PNG with value = round(depth * 256); 0 marks invalid pixels."""
    vals = np.clip(np.round(depth.values * 256.0), 0, 65535).astype(np.uint16)
    buf = io.BytesIO()
    Image.fromarray(vals).save(buf, format="PNG")
    return buf.getvalue()


def decode_depth_png(data: bytes) -> DepthMap:
    try:
        img = Image.open(io.BytesIO(data))
        img.load()
    except Exception as e:  # Pillow raises several unrelated types
        raise FormatError(f"cannot decode PNG: {e}") from None
    arr = np.asarray(img)
    if arr.ndim != 2:
        raise FormatError("depth PNG must be single-channel")
    return DepthMap(arr.astype(np.float64) / 256.0)


def encode_rgb_png(image) -> bytes:
    """8-bit RGB PNG of a float image in [0, 1]."""
    vals = np.clip(np.round(np.asarray(image, np.float64) * 255.0), 0, 255).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(vals, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def decode_rgb_png(data: bytes) -> np.ndarray:
    try:
        img = Image.open(io.BytesIO(data))
        img = img.convert("RGB")
    except Exception as e:
        raise FormatError(f"cannot decode PNG: {e}") from None
    return np.asarray(img, dtype=np.float32) / np.float32(255.0)


# ---------------------------------------------------------- directories


def _atomic(path, writer):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            writer(fh)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write(path, data: bytes):
    """Write ``data`` to ``path`` through a temporary file and a rename."""
    _atomic(path, lambda fh: fh.write(data))


def frame_name(frame) -> str:
    return f"{int(frame):06d}"


def list_frames(root) -> List[str]:
    """Frame ids present under ``root/calib``, sorted."""
    calib_dir = Path(root) / "calib"
    if not calib_dir.is_dir():
        raise FileNotFoundError(f"no calib directory under {root}")
    return sorted(p.stem for p in calib_dir.glob("*.txt"))


@dataclass(frozen=True, eq=False)
class Frame:
    frame_id: str
    scene: Scene
    labels: Tuple[Label, ...]
    calib: Calibration


def read_frame(root, frame_id, with_points=True) -> Frame:
    """Load one frame; missing labels or velodyne files read as empty."""
    root = Path(root)
    fid = frame_id if isinstance(frame_id, str) else frame_name(frame_id)
    calib = parse_calib((root / "calib" / f"{fid}.txt").read_text())
    left = decode_rgb_png((root / "image_2" / f"{fid}.png").read_bytes())
    right = decode_rgb_png((root / "image_3" / f"{fid}.png").read_bytes())
    label_path = root / "label_2" / f"{fid}.txt"
    labels = tuple(parse_labels(label_path.read_text())) if label_path.exists() else ()
    velo = root / "velodyne" / f"{fid}.bin"
    points = read_velodyne(velo.read_bytes(), calib) if with_points and velo.exists() else np.zeros((0, 4))
    rig = calib.rig(left.shape[1], left.shape[0])
    scene = Scene(left, right, points, rig, tuple(lb.box for lb in labels),
                  tuple((lb.truncated, lb.occluded) for lb in labels))
    return Frame(fid, scene, labels, calib)


def write_frame(root, frame: Frame):
    """Write a frame in KITTI layout; every file is written atomically."""
    root = Path(root)
    fid = frame.frame_id
    atomic_write(root / "calib" / f"{fid}.txt", format_calib(frame.calib).encode())
    atomic_write(root / "image_2" / f"{fid}.png", encode_rgb_png(frame.scene.left_image))
    atomic_write(root / "image_3" / f"{fid}.png", encode_rgb_png(frame.scene.right_image))
    atomic_write(root / "label_2" / f"{fid}.txt", format_labels(frame.labels).encode())
    atomic_write(root / "velodyne" / f"{fid}.bin", write_velodyne(frame.scene.points, frame.calib))


# ------------------------------------------------------------- synthetic

CLASS_SIZES = {  # (length, width, height), meters
    "Car": (3.9, 1.6, 1.56),
    "Pedestrian": (0.8, 0.6, 1.73),
    "Cyclist": (1.76, 0.6, 1.73),
}
CLASS_COLORS = {"Car": (0.8, 0.2, 0.2), "Pedestrian": (0.2, 0.7, 0.3), "Cyclist": (0.2, 0.3, 0.9)}
SYNTH_IMAGE = (375, 1242)  # rows, cols
SYNTH_FOCAL = 720.0
SYNTH_BASELINE = 0.5
GROUND_Y = 1.65  # box bottoms
GROUND_POINTS_Y = 1.7  # slightly below so ground points never fall inside a box
# Velodyne (x fwd, y left, z up) to camera (x right, y down, z fwd).
SYNTH_TR_VELO = np.array([[0.0, -1.0, 0.0, 0.0], [0.0, 0.0, -1.0, 0.0], [1.0, 0.0, 0.0, 0.0]])
YAW_QUANTUM = 2.0 ** -10
POINTS_PER_OBJECT = 400


def synth_rig(size=SYNTH_IMAGE, focal=SYNTH_FOCAL, baseline=SYNTH_BASELINE) -> StereoRig:
    rows, cols = size
    cam = CameraModel(focal, focal, float(cols // 2), float(rows // 2), cols, rows)
    return StereoRig(cam, cam, baseline)


def synth_calib(rig: StereoRig) -> Calibration:
    return Calibration.from_rig(rig, SYNTH_TR_VELO)


def _q8(x):
    # Quantize to 8-bit levels so PNG roundtrips are exact.
    return (np.round(np.clip(x, 0.0, 1.0) * 255.0) / 255.0).astype(np.float32)


def _background(cam: CameraModel, rows, cols):
    """Procedural gradient: a textured ground plane below the horizon, sky above.

    Both views render the same world, so the pair is stereo-consistent.
    """
    v, u = np.meshgrid(np.arange(rows, dtype=np.float64), np.arange(cols, dtype=np.float64),
                       indexing="ij")
    q = cam.to_camera(np.zeros(3))  # camera center offset in its own frame
    xn = (u - cam.c_u) / cam.f_u
    yn = (v - cam.c_v) / cam.f_v
    img = np.empty((rows, cols, 3))
    ground = yn > 1e-3
    # Ray hits y = GROUND_POINTS_Y; express the hit point in world coordinates.
    t = np.where(ground, (GROUND_POINTS_Y + q[1]) / np.where(ground, yn, 1.0), 0.0)
    gx = xn * t - q[0]
    gz = t - q[2]
    sky = 0.55 + 0.35 * (1.0 - np.clip((v / rows), 0, 1))
    for c, (a, b) in enumerate(((0.9, 0.35), (0.6, 0.5), (0.4, 0.8))):
        tex = 0.45 + 0.2 * np.sin(a * gx + 0.3 * c) * np.cos(b * gz) + 0.1 * np.sin(0.25 * gz)
        img[..., c] = np.where(ground, tex, sky * (0.7 + 0.15 * c))
    return img


def _surface_points(rng, box: Box3D, n):
    """``n`` points on the box surface shrunk by 2 % so they sit strictly inside."""
    l, w, h = box.size
    half = np.array([l, h, w]) / 2.0 * 0.98
    local = rng.uniform(-1.0, 1.0, size=(n, 3))
    axis = rng.integers(0, 3, size=n)
    side = rng.choice([-1.0, 1.0], size=n)
    local[np.arange(n), axis] = side
    local *= half
    c, s = math.cos(box.yaw), math.sin(box.yaw)
    x = c * local[:, 0] + s * local[:, 2]
    z = -s * local[:, 0] + c * local[:, 2]
    return np.stack([x, local[:, 1], z], axis=1) + np.array(box.center)


def synth_scene(seed=0, counts: Optional[Dict[str, int]] = None, depth_range=(5.0, 40.0),
                rig: Optional[StereoRig] = None, max_tries=2000) -> Scene:
    """Deterministic synthetic stereo scene.

    Boxes rest on the ground, are fully visible in both views and never
    overlap in bird's-eye view. Points are a ground grid plus box-surface
    samples (all float32-representable); images are procedural gradients
    with a flat-colored 2D box per object, painted far to near.
    """
    counts = {"Car": 3, "Pedestrian": 2, "Cyclist": 2} if counts is None else counts
    rig = synth_rig() if rig is None else rig
    rng = np.random.default_rng(seed)
    cams = rig.cameras()
    z_lo, z_hi = depth_range
    if not 0 < z_lo < z_hi:
        raise DomainError(f"bad depth range {depth_range}")
    boxes: List[Box3D] = []
    for cls, n in counts.items():
        if cls not in CLASS_SIZES:
            raise DomainError(f"unknown class {cls!r}")
        l, w, h = CLASS_SIZES[cls]
        placed = 0
        for _ in range(max_tries):
            if placed == n:
                break
            z = rng.uniform(z_lo, z_hi)
            x = rng.uniform(-0.45, 0.45) * z
            yaw = float(np.round(rng.uniform(-math.pi, math.pi) / YAW_QUANTUM) * YAW_QUANTUM)
            box = Box3D((x, GROUND_Y - h / 2.0, z), (l, w, h), yaw, cls)
            if not all(box_in_image(c, box) for c in cams):
                continue
            if any(bev_intersection(box, b) > 0.0 for b in boxes):
                continue
            boxes.append(box)
            placed += 1
    gx, gz = np.meshgrid(np.arange(-20.0, 20.01, 0.5), np.arange(2.0, 60.01, 0.5), indexing="ij")
    ground = np.stack([gx.ravel(), np.full(gx.size, GROUND_POINTS_Y), gz.ravel(),
                       np.full(gx.size, 0.3)], axis=1)
    parts = [ground]
    for box in boxes:
        while True:
            surf = _surface_points(rng, box, POINTS_PER_OBJECT).astype(np.float32).astype(np.float64)
            if np.all(box.contains(surf)):
                break
        parts.append(np.concatenate([surf, np.full((len(surf), 1), 0.8)], axis=1))
    points = np.concatenate(parts).astype(np.float32).astype(np.float64)

    rows, cols = rig.image_size
    images = []
    order = sorted(range(len(boxes)), key=lambda i: -boxes[i].center[2])
    for cam in cams:
        img = _background(cam, rows, cols)
        for i in order:
            u0, v0, u1, v1 = project_box(cam, boxes[i]).bbox
            shade = 0.85 + 0.15 * math.cos(boxes[i].yaw)
            img[math.ceil(v0):math.floor(v1) + 1, math.ceil(u0):math.floor(u1) + 1] = (
                np.array(CLASS_COLORS[boxes[i].class_id]) * shade
            )
        images.append(_q8(img))
    return Scene(images[0], images[1], points, rig, tuple(boxes))


def synth_frame(seed=0, index=0, counts=None, depth_range=(5.0, 40.0)) -> Frame:
    """Frame ``index`` of the synthetic split seeded with ``seed``."""
    scene = synth_scene([int(seed), int(index)], counts, depth_range)
    cam = scene.rig.left
    labels = tuple(Label.from_box(b, cam) for b in scene.boxes)
    return Frame(frame_name(index), scene, labels, synth_calib(scene.rig))


def write_synth_split(root, n_frames, seed=0, counts=None, depth_range=(5.0, 40.0)) -> List[str]:
    ids = []
    for i in range(n_frames):
        frame = synth_frame(seed, i, counts, depth_range)
        write_frame(root, frame)
        ids.append(frame.frame_id)
    return ids
