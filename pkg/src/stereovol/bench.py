"""Timing of plane-sweep variants on the compiled and numpy backends.

Every mode runs the same kernel on a per-plane channel map, so sample
counts and bytes moved agree across modes; only the map contents differ.
"""

from __future__ import annotations

import statistics
import time
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from stereovol import _backend
from stereovol.errors import DomainError
from stereovol.geom import make_rig
from stereovol.grid import FrustumSpec
from stereovol.sweep import SweepConfig, channel_map, group_channel_map, plane_sweep, right_shifts

BENCH_MODES = ("ps", "d-ps", "group-ps")


@dataclass(frozen=True)
class BenchRow:
    backend: str
    mode: str
    median_s: float
    samples_per_cell: float
    bytes_moved: int
    repeats: int


def bench_inputs(rows, cols, c_in, seed=0):
    rng = np.random.default_rng(seed)
    left = rng.standard_normal((rows, cols, c_in), dtype=np.float32)
    right = rng.standard_normal((rows, cols, c_in), dtype=np.float32)
    return left, right


def mode_channel_map(mode, rig, spec: FrustumSpec, c_in, c_v, alpha, group_size=None):
    if mode == "ps":
        return channel_map(SweepConfig("classic", c_in, c_v, alpha), spec.depth_planes, rig)
    if mode == "d-ps":
        return channel_map(SweepConfig("depthwise", c_in, c_v, alpha), spec.depth_planes, rig)
    if mode == "group-ps":
        return group_channel_map(c_in, group_size or c_v, spec.num_planes)
    raise DomainError(f"unknown bench mode {mode!r}; expected one of {BENCH_MODES}")


def bytes_moved(rows, cols, planes, c_v):
    """Output bytes plus feature bytes read: C_V left values and two C_V right taps per cell."""
    cells = rows * cols * planes
    return cells * 4 * (2 * c_v + 3 * c_v)


def run_bench(rows=48, cols=156, planes=96, c_in=96, c_v=32, repeats=5, alpha=1.0,
              backends: Optional[Sequence[str]] = None, modes: Sequence[str] = BENCH_MODES,
              group_size=None, seed=0, warmup=1) -> List[BenchRow]:
    """Median wall time per (backend, mode) over ``repeats`` warm runs.

    ``alpha`` defaults to 1 because with small exponents the depth-wise
    offsets stay at zero for realistic disparities, which would make the
    depth-wise run a copy of the classic one.
    """
    if repeats < 1:
        raise DomainError(f"repeats must be >= 1, got {repeats}")
    if not 1 <= c_v <= c_in:
        raise DomainError(f"need 1 <= C_V <= C_I, got C_V={c_v}, C_I={c_in}")
    backends = list(backends or _backend.available())
    rig = make_rig(720.0, cols * 2.0, rows * 2.0, 0.5, cols * 4, rows * 4)
    spec = FrustumSpec.uniform_depth(rows, cols, planes)
    left, right = bench_inputs(rows, cols, c_in, seed)
    shifts = right_shifts(rig, spec)
    out = np.empty((rows, cols, planes, 2 * c_v), np.float32)
    cells = rows * cols * planes
    result = []
    for name in backends:
        kern = _backend.get(name)
        for mode in modes:
            chan = mode_channel_map(mode, rig, spec, c_in, c_v, alpha, group_size)
            for _ in range(warmup):
                plane_sweep(left, right, shifts, chan, out=out, kernels=kern)
            times = []
            samples = 0
            for _ in range(repeats):
                t0 = time.perf_counter()
                _, samples = plane_sweep(left, right, shifts, chan, out=out, kernels=kern)
                times.append(time.perf_counter() - t0)
            result.append(BenchRow(name, mode, statistics.median(times), samples / cells,
                                   bytes_moved(rows, cols, planes, c_v), repeats))
    return result


def format_table(rows: Sequence[BenchRow]) -> str:
    lines = ["backend,mode,median_s,samples_per_cell,bytes_moved,repeats"]
    for r in rows:
        lines.append(f"{r.backend},{r.mode},{r.median_s:.6f},{r.samples_per_cell:g},"
                     f"{r.bytes_moved},{r.repeats}")
    return "\n".join(lines) + "\n"
