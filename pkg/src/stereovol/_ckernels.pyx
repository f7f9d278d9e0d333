# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled sampling kernels; see ``_pykernels`` for the reference semantics."""

from libc.math cimport floor

import numpy as np

NAME = "compiled"

cdef double FAR = 1e9


cdef inline bint _outside(double x, Py_ssize_t n) nogil:
    # True when neither floor(x) nor floor(x) + 1 can be a valid index.
    return not (x > -2.0 and x < n + 1.0)


def sweep_frustum(const float[:, :, ::1] left, const float[:, :, ::1] right,
                  const double[::1] shifts, const int[:, ::1] chan,
                  float[:, :, :, ::1] out):
    cdef Py_ssize_t rows = left.shape[0], cols = left.shape[1]
    cdef Py_ssize_t planes = chan.shape[0], cv = chan.shape[1]
    cdef Py_ssize_t v, u, k, j, x0, x1
    cdef double x, fx, w0, acc
    cdef int c
    cdef bint in0, in1
    with nogil:
        for v in range(rows):
            for u in range(cols):
                for k in range(planes):
                    for j in range(cv):
                        out[v, u, k, j] = left[v, u, chan[k, j]]
                    x = u - shifts[k]
                    if _outside(x, cols):
                        for j in range(cv):
                            out[v, u, k, cv + j] = 0.0
                        continue
                    x0 = <Py_ssize_t>floor(x)
                    fx = x - x0
                    w0 = 1.0 - fx
                    x1 = x0 + 1
                    in0 = 0 <= x0 < cols
                    in1 = 0 <= x1 < cols
                    for j in range(cv):
                        c = chan[k, j]
                        acc = 0.0
                        if in0:
                            acc = acc + w0 * right[v, x0, c]
                        if in1:
                            acc = acc + fx * right[v, x1, c]
                        out[v, u, k, cv + j] = <float>acc
    return rows * cols * planes * 2


cdef inline void _bilinear(const float[:, :, ::1] img, double x, double y,
                           const int[::1] chan, double[::1] acc) nogil:
    cdef Py_ssize_t rows = img.shape[0], cols = img.shape[1], nc = chan.shape[0]
    cdef Py_ssize_t x0, y0, xi, yi, j
    cdef int dx, dy
    cdef double fx, fy, wx, wy, w
    for j in range(nc):
        acc[j] = 0.0
    if x != x or y != y or _outside(x, cols) or _outside(y, rows):
        return
    x0 = <Py_ssize_t>floor(x)
    y0 = <Py_ssize_t>floor(y)
    fx = x - x0
    fy = y - y0
    for dy in range(2):
        yi = y0 + dy
        if yi < 0 or yi >= rows:
            continue
        wy = fy if dy else 1.0 - fy
        for dx in range(2):
            xi = x0 + dx
            if xi < 0 or xi >= cols:
                continue
            wx = fx if dx else 1.0 - fx
            w = wy * wx
            for j in range(nc):
                acc[j] = acc[j] + w * img[yi, xi, chan[j]]


def sample_voxels(const float[:, :, ::1] fmap, const double[::1] cam,
                  const double[:, ::1] pose, const double[::1] origin,
                  const double[::1] vsize, const int[:, ::1] chan,
                  float[:, :, :, ::1] out, Py_ssize_t ch_offset):
    cdef Py_ssize_t nx = out.shape[0], ny = out.shape[1], nz = out.shape[2]
    cdef Py_ssize_t cv = chan.shape[1]
    cdef Py_ssize_t ix, iy, iz, j
    cdef double fu = cam[0], fv = cam[1], cu = cam[2], cvv = cam[3], stride = cam[4]
    cdef double px, py, pz, qx, qy, qz, u, v
    cdef double[::1] acc = np.zeros(cv)
    with nogil:
        for ix in range(nx):
            px = origin[0] + (ix + 0.5) * vsize[0]
            for iy in range(ny):
                py = origin[1] + (iy + 0.5) * vsize[1]
                for iz in range(nz):
                    pz = origin[2] + (iz + 0.5) * vsize[2]
                    qx = pose[0, 0] * px + pose[0, 1] * py + pose[0, 2] * pz + pose[0, 3]
                    qy = pose[1, 0] * px + pose[1, 1] * py + pose[1, 2] * pz + pose[1, 3]
                    qz = pose[2, 0] * px + pose[2, 1] * py + pose[2, 2] * pz + pose[2, 3]
                    if qz > 0:
                        u = (fu * qx / qz + cu) / stride
                        v = (fv * qy / qz + cvv) / stride
                    else:
                        u = -FAR
                        v = -FAR
                    _bilinear(fmap, u, v, chan[iz], acc)
                    for j in range(cv):
                        out[ix, iy, iz, ch_offset + j] = <float>acc[j]
    return nx * ny * nz


def bilinear_points(const float[:, :, ::1] img, const double[:, ::1] uv, double[:, ::1] out):
    cdef Py_ssize_t n, j, nc = img.shape[2]
    cdef int[::1] chan = np.arange(nc, dtype=np.intc)
    cdef double[::1] acc = np.zeros(nc)
    with nogil:
        for n in range(uv.shape[0]):
            _bilinear(img, uv[n, 0], uv[n, 1], chan, acc)
            for j in range(nc):
                out[n, j] = acc[j]


def trilinear_points(const float[:, :, :, ::1] vol, const double[:, ::1] idx, double[:, ::1] out):
    cdef Py_ssize_t d0 = vol.shape[0], d1 = vol.shape[1], d2 = vol.shape[2], nc = vol.shape[3]
    cdef Py_ssize_t n, j, i0, i1, i2
    cdef Py_ssize_t b0, b1, b2
    cdef int corner, o0, o1, o2
    cdef double a0, a1, a2, f0, f1, f2, w
    with nogil:
        for n in range(idx.shape[0]):
            for j in range(nc):
                out[n, j] = 0.0
            a0 = idx[n, 0]
            a1 = idx[n, 1]
            a2 = idx[n, 2]
            if a0 != a0 or a1 != a1 or a2 != a2:
                continue
            if _outside(a0, d0) or _outside(a1, d1) or _outside(a2, d2):
                continue
            b0 = <Py_ssize_t>floor(a0)
            b1 = <Py_ssize_t>floor(a1)
            b2 = <Py_ssize_t>floor(a2)
            f0 = a0 - b0
            f1 = a1 - b1
            f2 = a2 - b2
            for corner in range(8):
                o0 = (corner >> 2) & 1
                o1 = (corner >> 1) & 1
                o2 = corner & 1
                i0 = b0 + o0
                i1 = b1 + o1
                i2 = b2 + o2
                if i0 < 0 or i0 >= d0 or i1 < 0 or i1 >= d1 or i2 < 0 or i2 >= d2:
                    continue
                w = 1.0
                w = w * (f0 if o0 else 1.0 - f0)
                w = w * (f1 if o1 else 1.0 - f1)
                w = w * (f2 if o2 else 1.0 - f2)
                for j in range(nc):
                    out[n, j] = out[n, j] + w * vol[i0, i1, i2, j]
