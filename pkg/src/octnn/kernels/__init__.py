"""Hot convolution kernels with backend selection at import.

The compiled Cython extension is used when available; otherwise the numpy
implementation takes over.  Set OCTNN_KERNELS=numpy or =cython to force a
backend (forcing cython raises if the extension did not build).  Both
backends implement identical contracts and are cross-checked by the test
suite; `python -m octnn.bench` compares their speed.
"""

import importlib
import os

import numpy as np

from . import conv_numpy

_requested = os.environ.get("OCTNN_KERNELS", "auto").lower()
if _requested not in ("auto", "cython", "numpy"):
    raise ValueError(f"OCTNN_KERNELS must be auto, cython or numpy, not '{_requested}'")

conv_cython = None
if _requested in ("auto", "cython"):
    try:
        conv_cython = importlib.import_module(".conv_cython", __package__)
    except ImportError:
        if _requested == "cython":
            raise ImportError(
                "OCTNN_KERNELS=cython but the compiled extension is not available; "
                "build it with: pip install -e . --no-build-isolation"
            ) from None

_impl = conv_cython if conv_cython is not None else conv_numpy
BACKEND = "cython" if conv_cython is not None else "numpy"


def backends():
    """Names of the backends importable in this environment."""
    return ("numpy", "cython") if conv_cython is not None else ("numpy",)


def _module(backend):
    if backend in (None, "auto"):
        return _impl
    if backend == "numpy":
        return conv_numpy
    if backend == "cython":
        if conv_cython is None:
            raise ValueError("cython backend not built")
        return conv_cython
    raise ValueError(f"unknown backend '{backend}'")


def set_num_threads(n):
    """Cap OpenMP worker threads in the compiled backend (no-op without it)."""
    if conv_cython is not None:
        conv_cython.set_num_threads(n)


def out_extent(size, stride):
    return -(-size // stride)


def same_pad_amounts(size, k, stride):
    """(before, after) zero padding so that out = ceil(in / stride)."""
    total = max((out_extent(size, stride) - 1) * stride + k - size, 0)
    return total // 2, total - total // 2


def pad_same(x, k, stride):
    """Zero-pad the three spatial axes of x [N,C,D,H,W] for 'same' output."""
    pads = [(0, 0), (0, 0)] + [same_pad_amounts(s, k, stride) for s in x.shape[2:]]
    return np.pad(x, pads)


def _check_conv_args(xp, w):
    if xp.ndim != 5 or w.ndim != 5:
        raise ValueError("conv3d expects x [N,C,D,H,W] and w [F,C,k,k,k]")
    if w.shape[2] % 2 != 1 or not (w.shape[2] == w.shape[3] == w.shape[4]):
        raise ValueError(f"kernel must be cubic with odd size, got {w.shape[2:]}")
    if xp.shape[1] != w.shape[1]:
        raise ValueError(
            f"input has {xp.shape[1]} channels but weights expect {w.shape[1]}")


def conv3d_forward_padded(xp, w, stride, backend=None):
    """Cross-correlate a pre-padded input; output extent = (padded - k)//stride + 1."""
    _check_conv_args(xp, w)
    xp = np.ascontiguousarray(xp)
    w = np.ascontiguousarray(w, dtype=xp.dtype)
    k = w.shape[2]
    spatial = tuple((s - k) // stride + 1 for s in xp.shape[2:])
    out = np.zeros((xp.shape[0], w.shape[0]) + spatial, dtype=xp.dtype)
    _module(backend).conv3d_forward(xp, w, int(stride), out)
    return out


def conv3d_forward(x, w, stride, backend=None):
    """'Same'-padded cross-correlation: spatial extents become ceil(in/stride)."""
    _check_conv_args(x, w)
    return conv3d_forward_padded(pad_same(x, w.shape[2], stride), w, stride, backend)


def conv3d_backward_padded(xp, w, gy, stride, in_shape, backend=None,
                           need_input_grad=True):
    """Gradients for a conv whose forward saw the padded input xp.

    Returns (gx or None, gw); gx is cropped back to in_shape.  For stride 1
    the input gradient reuses the forward kernel on flipped, channel-swapped
    weights; larger strides take the scatter path.
    """
    xp = np.ascontiguousarray(xp)
    w = np.ascontiguousarray(w, dtype=xp.dtype)
    gy = np.ascontiguousarray(gy, dtype=xp.dtype)
    k = w.shape[2]
    mod = _module(backend)

    gw = np.zeros_like(w)
    mod.conv3d_backward_w(xp, gy, int(stride), gw)

    if not need_input_grad:
        return None, gw

    d, h, wid = in_shape[2:]
    pads = [same_pad_amounts(s, k, stride) for s in (d, h, wid)]
    if stride == 1:
        w_swap = np.ascontiguousarray(w.transpose(1, 0, 2, 3, 4)[:, :, ::-1, ::-1, ::-1])
        gyp = np.pad(gy, [(0, 0), (0, 0)] + [(k - 1 - b, k - 1 - a) for b, a in pads])
        gx = np.zeros(in_shape, dtype=xp.dtype)
        mod.conv3d_forward(gyp, w_swap, 1, gx)
    else:
        gxp = np.zeros_like(xp)
        mod.conv3d_backward_x(gy, w, int(stride), gxp)
        (bd, _), (bh, _), (bw, _) = pads
        gx = np.ascontiguousarray(gxp[:, :, bd:bd + d, bh:bh + h, bw:bw + wid])
    return gx, gw
