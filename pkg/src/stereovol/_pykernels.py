"""Pure numpy implementations of the hot sampling kernels.

Interface-compatible with the compiled ``_ckernels`` extension and used when
it is unavailable. Arithmetic follows the same operation order as the
compiled loops so both backends agree bit for bit on the same inputs.
"""

import numpy as np

NAME = "python"


def _accumulate_bilinear(img, x, y, chan, acc):
    """Add bilinear samples of ``img[..., chan]`` at float positions into ``acc``.

    ``x``/``y`` have the same shape S; ``acc`` has shape S + (len(chan),).
    """
    rows, cols = img.shape[:2]
    # Far-away and NaN positions are all "outside"; clamp before int casts.
    x = np.nan_to_num(np.clip(x, -1e9, 1e9), nan=-1e9)
    y = np.nan_to_num(np.clip(y, -1e9, 1e9), nan=-1e9)
    x0 = np.floor(x)
    y0 = np.floor(y)
    fx = x - x0
    fy = y - y0
    x0 = x0.astype(np.int64)
    y0 = y0.astype(np.int64)
    for dy, wy in ((0, 1.0 - fy), (1, fy)):
        yi = y0 + dy
        oky = (yi >= 0) & (yi < rows)
        for dx, wx in ((0, 1.0 - fx), (1, fx)):
            xi = x0 + dx
            ok = oky & (xi >= 0) & (xi < cols)
            if not ok.any():
                continue
            w = (wy * wx)[ok]
            vals = img[yi[ok], xi[ok]][:, chan]
            acc[ok] += w[:, None] * vals


def sweep_frustum(left, right, shifts, chan, out):
    """Plane sweep into ``out[v, u, k, :]``.

    Left half of the channel axis copies ``left[v, u, chan[k]]``; right half
    samples ``right`` at ``(u - shifts[k], v)``. Returns the number of 2D
    samples taken.
    """
    rows, cols = left.shape[:2]
    planes, cv = chan.shape
    cols_f = np.arange(cols, dtype=np.float64)
    x0f = np.empty(cols)
    for k in range(planes):
        ch = chan[k]
        out[:, :, k, :cv] = left[:, :, ch]
        x = cols_f - shifts[k]
        np.floor(x, out=x0f)
        fx = x - x0f
        x0 = x0f.astype(np.int64)
        acc = np.zeros((rows, cols, cv))
        # The sample row is an integer, so only the upper row carries weight.
        for dx, w in ((0, 1.0 - fx), (1, fx)):
            xi = x0 + dx
            ok = (xi >= 0) & (xi < cols)
            if not ok.any():
                continue
            acc[:, ok] += w[ok][None, :, None] * right[:, xi[ok]][:, :, ch]
        out[:, :, k, cv:] = acc
    return rows * cols * planes * 2


def sample_voxels(fmap, cam, pose, origin, vsize, chan, out, ch_offset):
    """Project every voxel center into one view and bilinearly sample it.

    ``cam`` is ``(f_u, f_v, c_u, c_v, stride)``; ``pose`` the 3x4 world->camera
    transform; ``chan[i_z]`` the channel window for that z slice. Writes
    ``out[..., ch_offset:ch_offset + C_V]`` and returns the sample count.
    """
    nx, ny, nz = out.shape[:3]
    cv = chan.shape[1]
    fu, fv, cu, cvv, stride = (float(c) for c in cam)
    xs = origin[0] + (np.arange(nx) + 0.5) * vsize[0]
    ys = origin[1] + (np.arange(ny) + 0.5) * vsize[1]
    px, py = np.meshgrid(xs, ys, indexing="ij")
    for iz in range(nz):
        pz = origin[2] + (iz + 0.5) * vsize[2]
        qx = pose[0, 0] * px + pose[0, 1] * py + pose[0, 2] * pz + pose[0, 3]
        qy = pose[1, 0] * px + pose[1, 1] * py + pose[1, 2] * pz + pose[1, 3]
        qz = pose[2, 0] * px + pose[2, 1] * py + pose[2, 2] * pz + pose[2, 3]
        front = qz > 0
        safe = np.where(front, qz, 1.0)
        u = (fu * qx / safe + cu) / stride
        v = (fv * qy / safe + cvv) / stride
        # Voxels behind the camera are pushed outside so they sample zeros.
        u = np.where(front, u, -1e9)
        v = np.where(front, v, -1e9)
        acc = np.zeros((nx, ny, cv))
        _accumulate_bilinear(fmap, u, v, chan[iz], acc)
        out[:, :, iz, ch_offset:ch_offset + cv] = acc
    return nx * ny * nz


def bilinear_points(img, uv, out):
    """``out[n, :] = bilinear(img, u=uv[n, 0], v=uv[n, 1])`` with zero fill."""
    out[:] = 0.0
    chan = np.arange(img.shape[2])
    _accumulate_bilinear(img, uv[:, 0], uv[:, 1], chan, out)


def trilinear_points(vol, idx, out):
    """``out[n, :] = trilinear(vol, idx[n])`` with zero fill."""
    dims = vol.shape[:3]
    idx = np.nan_to_num(np.clip(idx, -1e9, 1e9), nan=-1e9)
    base = np.floor(idx)
    frac = idx - base
    base = base.astype(np.int64)
    out[:] = 0.0
    for corner in range(8):
        offs = ((corner >> 2) & 1, (corner >> 1) & 1, corner & 1)
        ok = np.ones(len(idx), dtype=bool)
        w = np.ones(len(idx))
        cidx = []
        for a, o in enumerate(offs):
            i = base[:, a] + o
            ok &= (i >= 0) & (i < dims[a])
            w = w * (frac[:, a] if o else 1.0 - frac[:, a])
            cidx.append(i)
        if not ok.any():
            continue
        vals = vol[cidx[0][ok], cidx[1][ok], cidx[2][ok]]
        out[ok] += w[ok][:, None] * vals
