"""Kernel lane selection.

Two interchangeable lanes provide the convolution lowering and pooling
primitives: a compiled extension (built from _ckernels.pyx) and a pure
numpy fallback. The compiled lane is preferred when importable; set
``NANOCNN_KERNELS=numpy`` or ``NANOCNN_KERNELS=compiled`` to force one.
``BACKEND`` names the active lane.

Public API (identical across lanes):

- im2col(x, kh, kw, stride, padding) -> (N, C*kh*kw, OH*OW)
- col2im(cols, c, h, w, kh, kw, stride, padding) -> (N, C, H, W)
- maxpool_forward(x, k, stride, padding) -> (out, idx)
- maxpool_backward(gout, idx, h, w) -> (N, C, H, W)

All kernels take float32 or float64 input and preserve its dtype; idx is
int64 holding flat iy*W + ix positions into each (n, c) plane.
"""

import os

import numpy as np

from . import numpy_backend

_FORCED = os.environ.get("NANOCNN_KERNELS", "").strip().lower()
if _FORCED not in ("", "compiled", "numpy"):
    raise ImportError(
        f"NANOCNN_KERNELS must be 'compiled' or 'numpy', got {_FORCED!r}")

_ck = None
if _FORCED != "numpy":
    try:
        from . import _ckernels as _ck
    except ImportError:
        if _FORCED == "compiled":
            raise
        _ck = None

if _ck is None:
    BACKEND = "numpy"
    im2col = numpy_backend.im2col
    col2im = numpy_backend.col2im
    maxpool_forward = numpy_backend.maxpool_forward
    maxpool_backward = numpy_backend.maxpool_backward
else:
    BACKEND = "compiled"

    def _out_extent(size, k, stride, padding):
        return (size + 2 * padding - k) // stride + 1

    def im2col(x, kh, kw, stride, padding):
        n, c, h, w = x.shape
        oh = _out_extent(h, kh, stride, padding)
        ow = _out_extent(w, kw, stride, padding)
        x = np.ascontiguousarray(x)
        out = np.empty((n, c * kh * kw, oh * ow), dtype=x.dtype)
        _ck.im2col(x, kh, kw, stride, padding, out)
        return out

    def col2im(cols, c, h, w, kh, kw, stride, padding):
        cols = np.ascontiguousarray(cols)
        out = np.empty((cols.shape[0], c, h, w), dtype=cols.dtype)
        _ck.col2im(cols, h, w, kh, kw, stride, padding, out)
        return out

    def maxpool_forward(x, k, stride, padding):
        n, c, h, w = x.shape
        oh = _out_extent(h, k, stride, padding)
        ow = _out_extent(w, k, stride, padding)
        x = np.ascontiguousarray(x)
        out = np.empty((n, c, oh, ow), dtype=x.dtype)
        idx = np.empty((n, c, oh, ow), dtype=np.int64)
        _ck.maxpool_forward(x, k, stride, padding, out, idx)
        return out, idx

    def maxpool_backward(gout, idx, h, w):
        gout = np.ascontiguousarray(gout)
        gin = np.zeros((gout.shape[0], gout.shape[1], h, w), dtype=gout.dtype)
        _ck.maxpool_backward(gout, np.ascontiguousarray(idx), gin)
        return gin

__all__ = ["BACKEND", "im2col", "col2im", "maxpool_forward", "maxpool_backward"]
