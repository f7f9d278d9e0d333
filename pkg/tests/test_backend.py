"""The compiled kernels and the numpy fallback agree bit for bit."""

import numpy as np
import pytest

from stereovol import _backend, _pykernels

compiled = pytest.importorskip("stereovol._ckernels")


def test_compiled_backend_is_default():
    assert _backend.available()[0] == "compiled"
    assert _backend.kernels is compiled


def test_use_switches_backend():
    prev = _backend.use("python")
    try:
        assert _backend.kernels is _pykernels
    finally:
        _backend.use(prev)
    with pytest.raises(ValueError):
        _backend.get("gpu")


@pytest.mark.parametrize("seed", range(5))
def test_sweep_parity(seed):
    rng = np.random.default_rng(seed)
    rows, cols, c_in, planes, cv = 5, 11, 12, 7, 4
    left = rng.standard_normal((rows, cols, c_in)).astype(np.float32)
    right = rng.standard_normal((rows, cols, c_in)).astype(np.float32)
    shifts = rng.uniform(-3, cols + 3, planes)
    shifts[0] = 2.0  # integer shift
    chan = np.stack([rng.permutation(c_in)[:cv] for _ in range(planes)]).astype(np.intc)
    a = np.empty((rows, cols, planes, 2 * cv), np.float32)
    b = np.empty_like(a)
    assert compiled.sweep_frustum(left, right, shifts, chan, a) == _pykernels.sweep_frustum(
        left, right, shifts, chan, b)
    np.testing.assert_array_equal(a, b)


@pytest.mark.parametrize("seed", range(5))
def test_voxel_parity(seed):
    rng = np.random.default_rng(seed)
    fmap = rng.standard_normal((9, 13, 6)).astype(np.float32)
    cam = np.array([20.0, 21.0, 25.0, 17.0, 4.0])
    theta = rng.uniform(-0.3, 0.3)
    pose = np.array([[np.cos(theta), 0, np.sin(theta), 0.1],
                     [0, 1, 0, -0.2],
                     [-np.sin(theta), 0, np.cos(theta), rng.uniform(-3, 1)]])
    origin = np.array([-2.0, -1.0, -0.5])
    vsize = np.array([0.3, 0.25, 0.4])
    chan = np.stack([rng.permutation(6)[:3] for _ in range(8)]).astype(np.intc)
    a = np.zeros((7, 5, 8, 6), np.float32)
    b = np.zeros_like(a)
    compiled.sample_voxels(fmap, cam, pose, origin, vsize, chan, a, 3)
    _pykernels.sample_voxels(fmap, cam, pose, origin, vsize, chan, b, 3)
    np.testing.assert_array_equal(a, b)


def test_point_sampler_parity():
    rng = np.random.default_rng(9)
    img = rng.standard_normal((6, 8, 3)).astype(np.float32)
    uv = rng.uniform(-3, 11, (500, 2))
    uv[:5] = [[np.nan, 1], [1e300, 2], [-1e300, 2], [0, 0], [7, 5]]
    a, b = np.zeros((500, 3)), np.zeros((500, 3))
    compiled.bilinear_points(img, uv, a)
    _pykernels.bilinear_points(img, uv, b)
    np.testing.assert_array_equal(a, b)
    vol = rng.standard_normal((4, 5, 6, 2)).astype(np.float32)
    idx = rng.uniform(-2, 7, (500, 3))
    idx[0] = [np.nan, 0, 0]
    a, b = np.zeros((500, 2)), np.zeros((500, 2))
    compiled.trilinear_points(vol, idx, a)
    _pykernels.trilinear_points(vol, idx, b)
    np.testing.assert_array_equal(a, b)
