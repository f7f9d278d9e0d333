"""Command-line entry point.

Exit codes: 0 success, 2 usage, 3 I/O or malformed input, 4 domain error.
``STEREOVOL_DATA`` sets the default data root for ``--root``.
"""

from __future__ import annotations

import argparse
import functools
import io
import os
import shutil
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from stereovol import _backend, analytics, bench, kitti_io, slcp
from stereovol.dualview import DepthMap
from stereovol.errors import DomainError, FormatError, ParseError
from stereovol.grid import DEFAULT_STRIDE, FeatureMap2D, FrustumSpec, VoxelGridSpec
from stereovol.sweep import (
    ALPHA_FRUSTUM,
    ALPHA_VOXEL,
    SweepConfig,
    build_3dgv,
    build_group_ps,
    build_psv,
    stereo_views,
)

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_DOMAIN = 0, 2, 3, 4

VOLUME_MODES = {
    "ps": ("frustum", "classic"),
    "psv": ("frustum", "classic"),
    "d-ps": ("frustum", "depthwise"),
    "d-psv": ("frustum", "depthwise"),
    "group-ps": ("frustum", "grouped"),
    "3dgv": ("voxel", "classic"),
    "d-3dgv": ("voxel", "depthwise"),
}


class UsageError(Exception):
    pass


def _triple(text, cast=float):
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"expected three comma-separated values, got {text!r}")
    return tuple(cast(p) for p in parts)


def _floats(text):
    try:
        return [float(p) for p in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _counts(text):
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("--samples takes Car,Pedestrian,Cyclist counts")
    try:
        vals = [int(p) for p in parts]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad counts {text!r}") from None
    if min(vals) < 0:
        raise argparse.ArgumentTypeError("counts must be >= 0")
    return dict(zip(("Car", "Pedestrian", "Cyclist"), vals))


def _require_dir(path, what):
    if not Path(path).is_dir():
        raise FileNotFoundError(f"{what} directory not found: {path}")


def _map(fn, items, jobs):
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def _frames(root, only=None):
    ids = kitti_io.list_frames(root)
    if only:
        wanted = [kitti_io.frame_name(f) if f.isdigit() else f for f in only.split(",")]
        missing = sorted(set(wanted) - set(ids))
        if missing:
            raise FileNotFoundError(f"frames not found under {root}: {', '.join(missing)}")
        ids = wanted
    return ids


# ------------------------------------------------------------ features


def image_features(image, c_in, stride=DEFAULT_STRIDE) -> FeatureMap2D:
    """Deterministic stand-in features: block-average RGB, then mix to ``c_in`` channels.

    Channel ``k`` is ``sin(w_k . rgb + phase_k)`` with fixed weights.
    """
    img = np.asarray(image, dtype=np.float64)
    s = int(stride)
    rows, cols = img.shape[0] // s, img.shape[1] // s
    if rows < 1 or cols < 1:
        raise DomainError(f"image {img.shape[:2]} is smaller than the stride {s}")
    small = img[:rows * s, :cols * s].reshape(rows, s, cols, s, 3).mean(axis=(1, 3))
    k = np.arange(c_in)
    weights = np.stack([np.cos(0.7 * k + c) * (2.0 + c) for c in range(3)], axis=0)
    phase = 0.37 * k
    return FeatureMap2D(np.sin(small @ weights + phase).astype(np.float32))


# ------------------------------------------------------------ commands


def cmd_synth(args):
    ids = kitti_io.write_synth_split(args.out, args.frames, seed=args.seed,
                                     counts=args.samples, depth_range=tuple(args.depth_range))
    print(f"wrote {len(ids)} frames to {args.out}")


def _load_features(args, frame):
    if args.features:
        paths = args.features.split(",")
        if len(paths) != 2:
            raise UsageError("--features takes LEFT.dvol,RIGHT.dvol")
        maps = [kitti_io.read_dvol(Path(p).read_bytes()) for p in paths]
        if not all(isinstance(m, FeatureMap2D) for m in maps):
            raise FormatError("--features files must hold 2D feature maps")
        return maps
    return [image_features(frame.scene.left_image, args.cin, args.stride),
            image_features(frame.scene.right_image, args.cin, args.stride)]


def cmd_volgen(args):
    if args.cv > args.cin:
        raise UsageError(f"--cv {args.cv} exceeds --cin {args.cin}")
    space, mode = VOLUME_MODES[args.mode]
    _require_dir(args.root, "data root")
    fid = _frames(args.root, args.frame)[0]
    frame = kitti_io.read_frame(args.root, fid, with_points=False)
    left, right = _load_features(args, frame)
    rig = frame.scene.rig
    alpha = args.alpha if args.alpha is not None else (ALPHA_FRUSTUM if space == "frustum" else ALPHA_VOXEL)
    if space == "frustum":
        spec = FrustumSpec.uniform_depth(left.rows, left.cols, args.planes, z_min=args.zmin,
                                         z_max=args.zmax, stride=args.stride)
        if mode == "grouped":
            vol = build_group_ps(left, right, rig, spec, args.group_size or args.cv)
        else:
            vol = build_psv(left, right, rig, spec, SweepConfig(mode, args.cin, args.cv, alpha))
    else:
        vspec = VoxelGridSpec(args.grid_origin, args.voxel_size, args.grid_dims)
        cfg = SweepConfig(mode, args.cin, args.cv, alpha)
        vol = build_3dgv(stereo_views(left, right, rig), vspec, cfg, rig, stride=args.stride)
    digest = kitti_io.write_dvol_file(args.out, vol)
    print("dims " + "x".join(str(n) for n in vol.data.shape))
    print(f"sha256 {digest}")


def _depth_job(root, out, fid):
    frame = kitti_io.read_frame(root, fid)
    depth = kitti_io.gt_depth(frame.scene.points, frame.scene.rig.left)
    kitti_io.atomic_write(Path(out) / f"{fid}.png", kitti_io.encode_depth_png(depth))
    return int(depth.valid.sum())


def cmd_depthgen(args):
    _require_dir(args.root, "data root")
    ids = _frames(args.root, args.frame)
    counts = _map(functools.partial(_depth_job, args.root, args.out), ids, args.jobs)
    for fid, n in zip(ids, counts):
        print(f"{fid} {n} valid pixels")


def _occupancy_job(root, planes, stride, vspec, fid):
    frame = kitti_io.read_frame(root, fid, with_points=False)
    rows, cols = frame.scene.rig.image_size
    fspec = FrustumSpec.uniform_depth(int(rows // stride), int(cols // stride), planes, stride=stride)
    return analytics.occupancy_profile([frame.scene], fspec, vspec)


def cmd_occupancy(args):
    _require_dir(args.root, "data root")
    ids = _frames(args.root, args.frame)
    vspec = VoxelGridSpec(args.grid_origin, args.voxel_size, args.grid_dims)
    job = functools.partial(_occupancy_job, args.root, args.planes, args.stride, vspec)
    records = [r for part in _map(job, ids, args.jobs) for r in part]
    buf = io.StringIO()
    analytics.write_profile_csv(records, buf)
    kitti_io.atomic_write(args.out, buf.getvalue().encode())
    if args.summary:
        rows = analytics.aggregate_profile(records, bin_m=args.bin)
        buf = io.StringIO()
        buf.write("class,bin_lo,bin_hi,mean_psv,mean_tdgv,count\n")
        for r in rows:
            buf.write(f"{r['class']},{r['bin_lo']:g},{r['bin_hi']:g},{r['mean_psv']:.3f},"
                      f"{r['mean_tdgv']:.3f},{r['count']}\n")
        kitti_io.atomic_write(args.summary, buf.getvalue().encode())
    print(f"{len(records)} boxes")


def cmd_deptherr(args):
    for path, what in ((args.root, "data root"), (args.pred, "prediction"), (args.gt, "ground truth")):
        _require_dir(path, what)
    ids = _frames(args.root, args.frame)
    edges = args.bins
    sums = np.zeros(len(edges) - 1)
    counts = np.zeros(len(edges) - 1, dtype=np.int64)
    for fid in ids:
        frame = kitti_io.read_frame(args.root, fid, with_points=False)
        pred = kitti_io.decode_depth_png((Path(args.pred) / f"{fid}.png").read_bytes())
        gt = kitti_io.decode_depth_png((Path(args.gt) / f"{fid}.png").read_bytes())
        rep = analytics.foreground_depth_error(pred, gt, frame.scene.boxes, frame.scene.rig.left, edges)
        for i, b in enumerate(rep.bins):
            if b.pixels:
                sums[i] += b.mae * b.pixels
                counts[i] += b.pixels
    bins = tuple(
        analytics.DepthErrorBin(lo, hi, float(s / n) if n else None, int(n))
        for lo, hi, s, n in zip(edges, edges[1:], sums, counts)
    )
    total = int(counts.sum())
    report = analytics.DepthErrorReport(bins, float(sums.sum() / total) if total else None, total)
    buf = io.StringIO()
    analytics.write_depth_error_csv(report, buf)
    kitti_io.atomic_write(args.out, buf.getvalue().encode())
    overall = "n/a" if report.overall is None else f"{report.overall:.4f} m"
    print(f"foreground MAE {overall} over {total} pixels")


def _read_detections(path):
    if not path.exists():
        return []
    dets = []
    for lb in kitti_io.parse_labels(path.read_text()):
        score = 1.0 if lb.score is None else lb.score
        dets.append(analytics.Detection(lb.box, score))
    return dets


def cmd_evalap(args):
    _require_dir(args.gt, "ground-truth root")
    _require_dir(args.pred, "prediction")
    ids = _frames(args.gt, args.frame)
    iou_fn = analytics.iou_3d if args.metric == "3d" else analytics.iou_bev
    level = None if args.difficulty == "all" else args.difficulty
    frames = []
    for fid in ids:
        labels = kitti_io.parse_labels((Path(args.gt) / "label_2" / f"{fid}.txt").read_text())
        dets = _read_detections(Path(args.pred) / f"{fid}.txt")
        frames.append((labels, dets))
    buf = io.StringIO()
    buf.write("class,difficulty,metric,iou_threshold,ap,num_gt,num_det\n")
    for cls in args.classes.split(","):
        thr = analytics.IOU_THRESHOLDS.get(cls, 0.5)
        per_frame = []
        for labels, dets in frames:
            gts = [lb.box for lb in labels if lb.type == cls
                   and analytics.passes_difficulty(lb.bbox_height, lb.occluded, lb.truncated, level)]
            per_frame.append(([d for d in dets if d.class_id == cls], gts))
        n_gt = sum(len(g) for _, g in per_frame)
        n_det = sum(len(d) for d, _ in per_frame)
        ap = f"{analytics.ap_r40_frames(per_frame, iou_fn, thr):.6f}" if n_gt else ""
        buf.write(f"{cls},{args.difficulty},{args.metric},{thr:g},{ap},{n_gt},{n_det}\n")
        print(f"{cls}: AP|R40 {ap or 'n/a'} ({n_gt} gt, {n_det} det)")
    kitti_io.atomic_write(args.out, buf.getvalue().encode())


def _copy_frame(src_root, dst_root, fid):
    for sub, ext in (("calib", "txt"), ("image_2", "png"), ("image_3", "png"),
                     ("label_2", "txt"), ("velodyne", "bin")):
        src = Path(src_root) / sub / f"{fid}.{ext}"
        if src.exists():
            dst = Path(dst_root) / sub / f"{fid}.{ext}"
            kitti_io.atomic_write(dst, src.read_bytes())


def _slcp_job(args, bank, index_fid):
    index, fid = index_fid
    frame = kitti_io.read_frame(args.target, fid)
    samples = slcp.sample_objects(bank, args.samples, seed=[args.seed, index, 0])
    res = slcp.paste(frame.scene, samples, seed=[args.seed, index, 1], apply_prob=args.prob)
    if not res.accepted:
        _copy_frame(args.target, args.out, fid)
    else:
        cam = res.scene.rig.left
        new = tuple(kitti_io.Label.from_box(s.box, cam) for s in res.accepted)
        kitti_io.write_frame(args.out, kitti_io.Frame(fid, res.scene, frame.labels + new, frame.calib))
    return ([s.box.class_id for s in res.accepted], [s.box.class_id for s, _ in res.rejected])


def cmd_slcp(args):
    if not 0.0 <= args.prob <= 1.0:
        raise UsageError("--prob must lie in [0, 1]")
    _require_dir(args.bank, "bank root")
    _require_dir(args.target, "target root")
    bank_frames = [kitti_io.read_frame(args.bank, f) for f in kitti_io.list_frames(args.bank)]
    bank = slcp.build_bank([f.scene for f in bank_frames])
    ids = _frames(args.target, args.frame)
    job = functools.partial(_slcp_job, args, bank)
    results = _map(job, list(enumerate(ids)), args.jobs)
    print("class,pasted,rejected")
    for cls in args.samples:
        pasted = sum(r[0].count(cls) for r in results)
        rejected = sum(r[1].count(cls) for r in results)
        print(f"{cls},{pasted},{rejected}")


def cmd_bench(args):
    if args.repeats < 1:
        raise UsageError("--repeats must be >= 1")
    if args.cv > args.cin:
        raise UsageError(f"--cv {args.cv} exceeds --cin {args.cin}")
    backends = _backend.available() if args.backend == "all" else [args.backend]
    rows = bench.run_bench(args.rows, args.cols, args.planes, args.cin, args.cv, args.repeats,
                           args.alpha, backends, group_size=args.group_size, seed=args.seed)
    sys.stdout.write(bench.format_table(rows))


# -------------------------------------------------------------- parser


def build_parser():
    p = argparse.ArgumentParser(prog="stereovol", description="Stereo volume geometry toolkit.")
    sub = p.add_subparsers(dest="command", required=True)
    default_root = os.environ.get("STEREOVOL_DATA")

    def common(sp, root=True):
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--jobs", type=int, default=1)
        if root:
            sp.add_argument("--root", default=default_root, required=default_root is None,
                            help="KITTI-layout data root (default: $STEREOVOL_DATA)")
            sp.add_argument("--frame", help="comma-separated frame ids (default: all)")

    def grid_flags(sp):
        kd = VoxelGridSpec.kitti_default()
        sp.add_argument("--voxel-size", type=float, default=kd.voxel_size[0])
        sp.add_argument("--grid-origin", type=_triple, default=kd.origin)
        sp.add_argument("--grid-dims", type=functools.partial(_triple, cast=int), default=kd.dims)

    sp = sub.add_parser("synth", help="write a synthetic KITTI-layout split")
    common(sp, root=False)
    sp.add_argument("--out", required=True)
    sp.add_argument("--frames", type=int, default=4)
    sp.add_argument("--samples", type=_counts, default={"Car": 3, "Pedestrian": 2, "Cyclist": 2})
    sp.add_argument("--depth-range", type=_floats, default=[5.0, 40.0])
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("volgen", help="build a stereo volume and write it as DVOL")
    common(sp)
    sp.add_argument("--out", required=True)
    sp.add_argument("--mode", choices=sorted(VOLUME_MODES), default="d-ps")
    sp.add_argument("--cin", type=int, default=96)
    sp.add_argument("--cv", type=int, default=32)
    sp.add_argument("--alpha", type=float, default=None)
    sp.add_argument("--planes", type=int, default=288)
    sp.add_argument("--zmin", type=float, default=2.0)
    sp.add_argument("--zmax", type=float, default=None)
    sp.add_argument("--stride", type=int, default=DEFAULT_STRIDE)
    sp.add_argument("--group-size", type=int, default=None)
    sp.add_argument("--features", help="LEFT.dvol,RIGHT.dvol precomputed 2D feature maps")
    grid_flags(sp)
    sp.set_defaults(func=cmd_volgen)

    sp = sub.add_parser("depthgen", help="ground-truth depth PNGs from LiDAR points")
    common(sp)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_depthgen)

    sp = sub.add_parser("occupancy", help="per-box voxel occupancy CSV")
    common(sp)
    sp.add_argument("--out", required=True)
    sp.add_argument("--summary", help="also write per-class depth-bin means here")
    sp.add_argument("--bin", type=float, default=5.0)
    sp.add_argument("--planes", type=int, default=288)
    sp.add_argument("--stride", type=int, default=DEFAULT_STRIDE)
    grid_flags(sp)
    sp.set_defaults(func=cmd_occupancy)

    sp = sub.add_parser("deptherr", help="foreground depth error by depth bin")
    common(sp)
    sp.add_argument("--pred", required=True, help="directory of predicted depth PNGs")
    sp.add_argument("--gt", required=True, help="directory of ground-truth depth PNGs")
    sp.add_argument("--out", required=True)
    sp.add_argument("--bins", type=_floats, default=[float(x) for x in range(0, 65, 5)])
    sp.set_defaults(func=cmd_deptherr)

    sp = sub.add_parser("evalap", help="AP|R40 per class")
    common(sp, root=False)
    sp.add_argument("--gt", required=True, help="KITTI-layout root with label_2/")
    sp.add_argument("--pred", required=True, help="directory of KITTI-format detections")
    sp.add_argument("--frame", help="comma-separated frame ids (default: all)")
    sp.add_argument("--out", required=True)
    sp.add_argument("--classes", default="Car,Pedestrian,Cyclist")
    sp.add_argument("--metric", choices=("3d", "bev"), default="3d")
    sp.add_argument("--difficulty", choices=("all", "easy", "moderate", "hard"), default="all")
    sp.set_defaults(func=cmd_evalap)

    sp = sub.add_parser("slcp", help="stereo-LiDAR copy-paste augmentation")
    common(sp, root=False)
    sp.add_argument("--bank", required=True, help="KITTI-layout root to cut objects from")
    sp.add_argument("--target", required=True, help="KITTI-layout root to paste into")
    sp.add_argument("--frame", help="comma-separated target frame ids (default: all)")
    sp.add_argument("--out", required=True)
    sp.add_argument("--samples", type=_counts, default=dict(slcp.DEFAULT_COUNTS))
    sp.add_argument("--prob", type=float, default=slcp.DEFAULT_APPLY_PROB)
    sp.set_defaults(func=cmd_slcp)

    sp = sub.add_parser("bench", help="time plane-sweep modes per kernel backend")
    common(sp, root=False)
    sp.add_argument("--rows", type=int, default=48)
    sp.add_argument("--cols", type=int, default=156)
    sp.add_argument("--planes", type=int, default=96)
    sp.add_argument("--cin", type=int, default=96)
    sp.add_argument("--cv", type=int, default=32)
    sp.add_argument("--alpha", type=float, default=1.0)
    sp.add_argument("--group-size", type=int, default=None)
    sp.add_argument("--repeats", type=int, default=5)
    sp.add_argument("--backend", choices=("all", "compiled", "python"), default="all")
    sp.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE
    if getattr(args, "jobs", 1) < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        args.func(args)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ParseError, FormatError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    except (DomainError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DOMAIN
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
