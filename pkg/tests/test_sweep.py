import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from stereovol.errors import DomainError
from stereovol.geom import make_rig
from stereovol.grid import FeatureMap2D, FrustumSpec, VoxelGridSpec
from stereovol.sweep import (
    SampleCounter,
    SweepConfig,
    build_3dgv,
    build_group_ps,
    build_psv,
    channel_map,
    cyclic_slice,
    group_channel_map,
    shift_of_depth,
    stereo_views,
)


@pytest.fixture
def small_rig():
    return make_rig(720.0, 40.0, 12.0, 0.5, 80, 24)


def test_shift_examples(rig):
    assert shift_of_depth(rig, 9, SweepConfig(alpha=1.0, s=1 / 3)) == 13
    assert shift_of_depth(rig, 9, SweepConfig(alpha=0.5, s=1 / 3)) == 2
    for d in (2.0, 9.0, 50.0):
        assert shift_of_depth(rig, d, SweepConfig(alpha=0.0, s=1 / 3)) == 0


def test_shift_clamped(rig):
    assert shift_of_depth(rig, 1.0, SweepConfig(alpha=1.0, s=1.0)) == 64


def test_shift_default_ratio_needs_plane_count(rig):
    with pytest.raises(DomainError):
        shift_of_depth(rig, 9, SweepConfig(alpha=1.0))
    assert shift_of_depth(rig, 9, SweepConfig(alpha=1.0), num_planes=288) == math.floor(40 / 3)


def test_shift_bad_depth(rig):
    with pytest.raises(DomainError):
        shift_of_depth(rig, 0, SweepConfig(alpha=1.0, s=1.0))


@given(st.floats(0, 3), st.floats(0.05, 5), st.floats(0.3, 200), st.floats(0.3, 200))
def test_shift_monotone_in_depth(alpha, s, a, b):
    rig = make_rig(720.0, 621.0, 187.0, 0.5, 1242, 375)
    cfg = SweepConfig(alpha=alpha, s=s)
    lo, hi = min(a, b), max(a, b)
    assert shift_of_depth(rig, lo, cfg) >= shift_of_depth(rig, hi, cfg)


def test_cyclic_slice_examples():
    assert cyclic_slice(0, 96, 32) == list(range(32))
    assert cyclic_slice(40, 96, 32) == list(range(64, 72)) + list(range(40, 64))
    assert cyclic_slice(64, 96, 32) == list(range(64, 96))
    with pytest.raises(DomainError):
        cyclic_slice(65, 96, 32)
    with pytest.raises(DomainError):
        cyclic_slice(-1, 96, 32)


@given(st.integers(1, 40).flatmap(lambda cv: st.tuples(st.just(cv), st.integers(cv, 120))).flatmap(
    lambda t: st.tuples(st.just(t[0]), st.just(t[1]), st.integers(0, t[1] - t[0]))))
def test_cyclic_slice_law(args):
    cv, c_in, shift = args
    out = cyclic_slice(shift, c_in, cv)
    assert len(out) == cv
    assert sorted(out) == list(range(shift, shift + cv))
    assert all(c % cv == j for j, c in enumerate(out))


def test_channel_consistency_all_shift_pairs():
    slices = [cyclic_slice(s, 96, 32) for s in range(65)]
    for a, b in itertools.combinations(slices, 2):
        for c in set(a) & set(b):
            assert a.index(c) == b.index(c)


def test_group_channel_map_even_split():
    m = group_channel_map(96, 32, 288)
    for k in range(288):
        g = k // 96
        assert list(m[k]) == list(range(32 * g, 32 * g + 32))
    with pytest.raises(DomainError):
        group_channel_map(96, 30, 288)


def test_config_validation():
    with pytest.raises(DomainError):
        SweepConfig(c_in=96, c_v=128)
    with pytest.raises(DomainError):
        SweepConfig(alpha=-1)
    with pytest.raises(DomainError):
        SweepConfig(s=0)
    with pytest.raises(DomainError):
        SweepConfig(mode="other")


def _maps(rows, cols, c, seed=0):
    rng = np.random.default_rng(seed)
    return (FeatureMap2D(rng.standard_normal((rows, cols, c))),
            FeatureMap2D(rng.standard_normal((rows, cols, c))))


def test_psv_constant_maps(small_rig):
    spec = FrustumSpec(6, 20, 4, (20.0, 40.0))
    left = FeatureMap2D(np.ones((6, 20, 8)))
    right = FeatureMap2D(np.full((6, 20, 8), 2.0))
    vol = build_psv(left, right, small_rig, spec, SweepConfig("classic", 8, 8))
    # disparity 18 and 9 px -> 4.5 and 2.25 feature px; columns >= 6 sample fully inside.
    np.testing.assert_array_equal(vol.data[:, 6:, :, :8], 1.0)
    np.testing.assert_array_equal(vol.data[:, 6:, :, 8:], 2.0)
    # Column 0 samples at -4.5 on plane 0: fully outside.
    np.testing.assert_array_equal(vol.data[:, 0, 0, 8:], 0.0)


def test_psv_matches_scalar_oracle(small_rig):
    left, right = _maps(6, 20, 12)
    spec = FrustumSpec(6, 20, 4, (7.0, 11.0, 23.0))
    cfg = SweepConfig("depthwise", 12, 4, alpha=1.0, s=0.2)
    vol = build_psv(left, right, small_rig, spec, cfg)
    for k, d in enumerate(spec.depth_planes):
        shift = min(max(math.floor(math.floor(720 * 0.5 / d) * 0.2), 0), 8)
        chans = cyclic_slice(shift, 12, 4)
        x_off = 720 * 0.5 / d / 4
        for v in range(6):
            for u in range(20):
                np.testing.assert_array_equal(vol.data[v, u, k, :4], left.data[v, u, chans])
                x = u - x_off
                x0 = math.floor(x)
                f = x - x0
                ref = np.zeros(4)
                for xi, w in ((x0, 1 - f), (x0 + 1, f)):
                    if 0 <= xi < 20:
                        ref += w * right.data[v, xi, chans].astype(np.float64)
                np.testing.assert_allclose(vol.data[v, u, k, 4:], ref, rtol=1e-6, atol=1e-6)


def test_psv_degenerate_equivalence(small_rig):
    left, right = _maps(6, 20, 16, seed=3)
    spec = FrustumSpec.uniform_depth(6, 20, 12, z_min=3.0)
    a = build_psv(left, right, small_rig, spec, SweepConfig("classic", 16, 16))
    b = build_psv(left, right, small_rig, spec, SweepConfig("depthwise", 16, 16, alpha=1.0, s=2.0))
    np.testing.assert_array_equal(a.data, b.data)


def test_psv_shape_errors(small_rig):
    left, right = _maps(6, 20, 8)
    spec = FrustumSpec(6, 20, 4, (5.0,))
    with pytest.raises(DomainError):
        build_psv(left, FeatureMap2D(np.zeros((6, 19, 8))), small_rig, spec, SweepConfig("classic", 8, 4))
    with pytest.raises(DomainError):
        build_psv(left, right, small_rig, FrustumSpec(5, 20, 4, (5.0,)), SweepConfig("classic", 8, 4))
    with pytest.raises(DomainError):
        build_psv(left, right, small_rig, spec, SweepConfig("classic", 16, 4))


def test_sample_count_parity(small_rig):
    left, right = _maps(6, 20, 12)
    spec = FrustumSpec.uniform_depth(6, 20, 9, z_min=3.0)
    counts = []
    for cfg in (SweepConfig("classic", 12, 4), SweepConfig("depthwise", 12, 4, alpha=1.0)):
        c = SampleCounter()
        build_psv(left, right, small_rig, spec, cfg, counter=c)
        counts.append(c.per_cell)
    c = SampleCounter()
    build_group_ps(left, right, small_rig, spec, 4, counter=c)
    counts.append(c.per_cell)
    assert counts[0] == counts[1] == counts[2] == 2


def test_group_ps_single_group_equals_classic(small_rig):
    left, right = _maps(6, 20, 8)
    spec = FrustumSpec.uniform_depth(6, 20, 5, z_min=3.0)
    a = build_psv(left, right, small_rig, spec, SweepConfig("classic", 8, 8))
    b = build_group_ps(left, right, small_rig, spec, 8)
    np.testing.assert_array_equal(a.data, b.data)


def test_channel_map_modes(rig):
    depths = [5.0, 10.0, 40.0]
    np.testing.assert_array_equal(channel_map(SweepConfig("classic"), depths, rig), [list(range(32))] * 3)
    grouped = channel_map(SweepConfig("grouped", group_size=32), [1.0] * 6, rig)
    assert [row[0] for row in grouped] == [0, 0, 32, 32, 64, 64]


def test_3dgv_constant_view():
    rig = make_rig(100.0, 40.0, 30.0, 0.5, 80, 60)
    views = stereo_views(FeatureMap2D(np.full((15, 20, 8), 3.0)), FeatureMap2D(np.full((15, 20, 8), 5.0)), rig)
    spec = VoxelGridSpec((-1.0, -1.0, 4.0), 0.5, (4, 4, 4))
    vol = build_3dgv(views, spec, SweepConfig("classic", 8, 4), rig)
    assert vol.channels == 8
    np.testing.assert_allclose(vol.data[..., :4], 3.0)
    np.testing.assert_allclose(vol.data[..., 4:], 5.0)
    mono = build_3dgv(views[:1], spec, SweepConfig("classic", 8, 4), rig)
    assert mono.channels == 4


def test_3dgv_outside_and_behind_are_zero():
    rig = make_rig(100.0, 40.0, 30.0, 0.5, 80, 60)
    views = stereo_views(FeatureMap2D(np.ones((15, 20, 4))), FeatureMap2D(np.ones((15, 20, 4))), rig)
    # Far to the left (u << 0) and behind the camera.
    spec = VoxelGridSpec((-40.0, 0.0, 1.0), 1.0, (2, 1, 1))
    np.testing.assert_array_equal(build_3dgv(views, spec, SweepConfig("classic", 4, 4), rig).data, 0)
    spec = VoxelGridSpec((0.0, 0.0, -5.0), 1.0, (1, 1, 2))
    np.testing.assert_array_equal(build_3dgv(views, spec, SweepConfig("classic", 4, 4), rig).data, 0)


def test_3dgv_matches_scalar_oracle():
    rig = make_rig(100.0, 40.0, 30.0, 0.5, 80, 60)
    rng = np.random.default_rng(5)
    left = FeatureMap2D(rng.standard_normal((15, 20, 12)))
    right = FeatureMap2D(rng.standard_normal((15, 20, 12)))
    spec = VoxelGridSpec((-1.5, -1.0, 2.0), (0.5, 0.5, 1.5), (6, 4, 5))
    cfg = SweepConfig("depthwise", 12, 4, alpha=1.0, s=0.3)
    vol = build_3dgv(stereo_views(left, right, rig), spec, cfg, rig)
    for ix, iy, iz in itertools.product(range(6), range(4), range(5)):
        p = np.array(spec.origin) + (np.array([ix, iy, iz]) + 0.5) * spec.voxel_size
        shift = min(max(math.floor(math.floor(50.0 / p[2]) * 0.3), 0), 8)
        chans = cyclic_slice(shift, 12, 4)
        for view, (fmap, xoff) in enumerate(((left, 0.0), (right, 0.5))):
            u = (100 * (p[0] - xoff) / p[2] + 40) / 4
            v = (100 * p[1] / p[2] + 30) / 4
            x0, y0 = math.floor(u), math.floor(v)
            ref = np.zeros(4)
            for yi, xi in itertools.product((y0, y0 + 1), (x0, x0 + 1)):
                if 0 <= yi < 15 and 0 <= xi < 20:
                    w = (1 - abs(u - xi)) * (1 - abs(v - yi))
                    ref += w * fmap.data[yi, xi, chans]
            np.testing.assert_allclose(vol.data[ix, iy, iz, 4 * view:4 * view + 4], ref, atol=1e-5)
