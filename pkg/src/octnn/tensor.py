"""Dense float arrays and the array ops everything else builds on.

A tensor here is a plain C-contiguous numpy float array: row-major layout,
last axis fastest-varying (the depth axis of a volume stays contiguous for
the convolution inner loops).  float32 is the working precision for
training; gradient checks build everything in float64, so constructors
take an optional dtype.
"""

import numpy as np

DEFAULT_DTYPE = np.float32


def _checked_shape(shape):
    shape = tuple(int(s) for s in shape)
    if not shape:
        raise ValueError("shape must have at least one axis")
    if any(s < 1 for s in shape):
        raise ValueError(f"axis extents must be >= 1, got {shape}")
    return shape


def zeros(shape, dtype=None):
    return np.zeros(_checked_shape(shape), dtype=dtype or DEFAULT_DTYPE)


def full(shape, fill, dtype=None):
    return np.full(_checked_shape(shape), fill, dtype=dtype or DEFAULT_DTYPE)


def from_values(shape, values, dtype=None):
    """Build a tensor from flat values in row-major order."""
    shape = _checked_shape(shape)
    data = np.asarray(values, dtype=dtype or DEFAULT_DTYPE).ravel()
    n = int(np.prod(shape))
    if data.size != n:
        raise ValueError(f"got {data.size} values for shape {shape}, expected {n}")
    return np.ascontiguousarray(data.reshape(shape))


def emap(a, fn):
    """Apply a scalar function elementwise.

    General but slow; the hot paths use numpy ufuncs directly.
    """
    a = np.asarray(a)
    return np.vectorize(fn, otypes=[a.dtype])(a)


def ezip(a, b, fn):
    """Apply a binary scalar function elementwise to two same-shape tensors."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return np.vectorize(fn, otypes=[a.dtype])(a, b)


def reduce_mean(a, axes):
    """Mean over the named axes; reduced axes are removed from the shape."""
    a = np.asarray(a)
    axes = tuple(int(ax) for ax in axes)
    if len(set(axes)) != len(axes):
        raise ValueError(f"duplicate reduction axes: {axes}")
    for ax in axes:
        if not 0 <= ax < a.ndim:
            raise ValueError(f"axis {ax} out of range for a {a.ndim}-d tensor")
    return np.asarray(a.mean(axis=axes), dtype=a.dtype)


def pad_zero(a, amounts):
    """Zero-pad with per-axis (before, after) amounts."""
    a = np.asarray(a)
    amounts = [(int(b), int(e)) for b, e in amounts]
    if len(amounts) != a.ndim:
        raise ValueError(f"need {a.ndim} (before, after) pairs, got {len(amounts)}")
    if any(b < 0 or e < 0 for b, e in amounts):
        raise ValueError("pad amounts must be >= 0")
    return np.pad(a, amounts, mode="constant")


def _axis_positions(src, dst):
    # corner-aligned sampling: position i*(src-1)/(dst-1); a single target
    # sample maps to the source center
    if dst == 1:
        pos = np.array([(src - 1) / 2.0])
    else:
        pos = np.arange(dst, dtype=np.float64) * ((src - 1) / (dst - 1))
    lo = np.floor(pos).astype(np.int64)
    if src > 1:
        lo = np.minimum(lo, src - 2)
    hi = np.minimum(lo + 1, src - 1)
    frac = pos - lo
    return lo, hi, frac


def resample_trilinear(a, target):
    """Trilinear resampling of a 3-d volume to the target extents.

    Corner-aligned: resampling to the same extents is the exact identity,
    and output values never leave [min(a), max(a)].
    """
    a = np.asarray(a)
    if a.ndim != 3:
        raise ValueError(f"expected a 3-d volume, got shape {a.shape}")
    target = _checked_shape(target)
    if len(target) != 3:
        raise ValueError(f"target must have 3 extents, got {target}")
    if a.shape == target:
        return a.copy()

    z0, z1, fz = _axis_positions(a.shape[0], target[0])
    y0, y1, fy = _axis_positions(a.shape[1], target[1])
    x0, x1, fx = _axis_positions(a.shape[2], target[2])
    src = a.astype(np.float64, copy=False)
    out = np.empty(target, dtype=np.float64)

    # process output depth slabs so huge upsamples stay within memory
    slab = max(1, int(2**24) // max(1, target[1] * target[2]))
    for s in range(0, target[0], slab):
        sl = slice(s, min(s + slab, target[0]))
        acc = np.zeros((sl.stop - sl.start,) + target[1:], dtype=np.float64)
        for zi, wz in ((z0[sl], 1.0 - fz[sl]), (z1[sl], fz[sl])):
            for yi, wy in ((y0, 1.0 - fy), (y1, fy)):
                for xi, wx in ((x0, 1.0 - fx), (x1, fx)):
                    w = wz[:, None, None] * wy[None, :, None] * wx[None, None, :]
                    acc += w * src[np.ix_(zi, yi, xi)]
        out[sl] = acc
    # convex weights keep values in range up to rounding; trim the round-off
    np.clip(out, src.min(), src.max(), out=out)
    return out.astype(a.dtype)
