"""Pure-numpy conv kernels: per-sample im2col plus BLAS matmul.

Same contracts as the compiled backend: cross-correlation on pre-padded
inputs, accumulating into caller-provided zeroed outputs.  The column
matrix is built per depth-slab to bound memory on large volumes.
"""

import numpy as np

# cap on the transient column matrix, in elements
_COL_BUDGET = 1 << 24


def _slab_rows(c, k, ho, wo, do_):
    per_row = c * k * k * k * ho * wo
    return max(1, min(do_, _COL_BUDGET // max(1, per_row)))


def _im2col(xp, n, c, k, stride, z_lo, z_hi, ho, wo):
    # columns [c*k^3, (z_hi-z_lo)*ho*wo] for sample n
    dz = z_hi - z_lo
    cols = np.empty((c * k * k * k, dz * ho * wo), dtype=xp.dtype)
    r = 0
    for ci in range(c):
        for kz in range(k):
            for ky in range(k):
                for kx in range(k):
                    block = xp[n, ci,
                               z_lo * stride + kz: (z_hi - 1) * stride + kz + 1: stride,
                               ky: ky + stride * ho: stride,
                               kx: kx + stride * wo: stride]
                    cols[r] = block.reshape(-1)
                    r += 1
    return cols


def conv3d_forward(xp, w, stride, out):
    """out[n,f] += w  cross-correlated with the padded input."""
    n, c = xp.shape[:2]
    f, k = w.shape[0], w.shape[2]
    do_, ho, wo = out.shape[2:]
    w2 = w.reshape(f, -1)
    slab = _slab_rows(c, k, ho, wo, do_)
    for i in range(n):
        for z0 in range(0, do_, slab):
            z1 = min(z0 + slab, do_)
            cols = _im2col(xp, i, c, k, stride, z0, z1, ho, wo)
            out[i, :, z0:z1] += (w2 @ cols).reshape(f, z1 - z0, ho, wo)


def conv3d_backward_w(xp, gy, stride, gw):
    """Weight gradient; gw must arrive zeroed."""
    n, c = xp.shape[:2]
    f, k = gw.shape[0], gw.shape[2]
    do_, ho, wo = gy.shape[2:]
    acc = gw.reshape(f, -1)
    slab = _slab_rows(c, k, ho, wo, do_)
    for i in range(n):
        for z0 in range(0, do_, slab):
            z1 = min(z0 + slab, do_)
            cols = _im2col(xp, i, c, k, stride, z0, z1, ho, wo)
            g2 = gy[i, :, z0:z1].reshape(f, -1)
            acc += g2 @ cols.T


def conv3d_backward_x(gy, w, stride, gxp):
    """Input gradient scattered into the zeroed padded buffer gxp."""
    f, c, k = w.shape[0], w.shape[1], w.shape[2]
    do_, ho, wo = gy.shape[2:]
    g2 = np.ascontiguousarray(gy.transpose(1, 0, 2, 3, 4)).reshape(f, -1)
    for kz in range(k):
        for ky in range(k):
            for kx in range(k):
                contrib = (w[:, :, kz, ky, kx].T @ g2).reshape(
                    (c,) + gy.shape[:1] + gy.shape[2:])
                gxp.transpose(1, 0, 2, 3, 4)[
                    :, :,
                    kz: kz + stride * do_: stride,
                    ky: ky + stride * ho: stride,
                    kx: kx + stride * wo: stride] += contrib
