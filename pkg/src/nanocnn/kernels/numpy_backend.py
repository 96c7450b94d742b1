"""Pure-numpy kernel lane.

Vectorized equivalents of the compiled kernels, used when the extension
is unavailable or when ``NANOCNN_KERNELS=numpy`` forces this lane. Both
lanes implement the exact same contracts (shapes, dtypes, tie rules) and
the test suite cross-checks them against each other.
"""

import numpy as np


def _out_extent(size, k, stride, padding):
    return (size + 2 * padding - k) // stride + 1


def im2col(x, kh, kw, stride, padding):
    """Lower x[N, C, H, W] to patch columns of shape (N, C*kh*kw, OH*OW)."""
    n, c, h, w = x.shape
    oh = _out_extent(h, kh, stride, padding)
    ow = _out_extent(w, kw, stride, padding)
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    win = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(2, 3))
    win = win[:, :, ::stride, ::stride]          # (N, C, OH, OW, kh, kw)
    win = win.transpose(0, 1, 4, 5, 2, 3)        # (N, C, kh, kw, OH, OW)
    return np.ascontiguousarray(win).reshape(n, c * kh * kw, oh * ow)


def col2im(cols, c, h, w, kh, kw, stride, padding):
    """Adjoint of im2col: accumulate cols back into an (N, C, H, W) image."""
    n = cols.shape[0]
    oh = _out_extent(h, kh, stride, padding)
    ow = _out_extent(w, kw, stride, padding)
    grid = cols.reshape(n, c, kh, kw, oh, ow)
    padded = np.zeros((n, c, h + 2 * padding, w + 2 * padding), dtype=cols.dtype)
    for ky in range(kh):
        for kx in range(kw):
            # distinct strided targets for a fixed (ky, kx), so += is exact
            padded[:, :, ky:ky + stride * oh:stride, kx:kx + stride * ow:stride] += grid[:, :, ky, kx]
    if padding:
        return np.ascontiguousarray(padded[:, :, padding:-padding, padding:-padding])
    return padded


def maxpool_forward(x, k, stride, padding):
    """Max over k x k windows.

    Returns (out, idx) where idx holds the winning input position as a flat
    iy*W + ix offset into each (n, c) plane. Padding cells are -inf and never
    win; ties break to the first cell in row-major window order.
    """
    n, c, h, w = x.shape
    oh = _out_extent(h, k, stride, padding)
    ow = _out_extent(w, k, stride, padding)
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)),
                   constant_values=-np.inf)
    win = np.lib.stride_tricks.sliding_window_view(x, (k, k), axis=(2, 3))
    win = win[:, :, ::stride, ::stride].reshape(n, c, oh, ow, k * k)
    local = win.argmax(axis=-1)
    out = np.take_along_axis(win, local[..., None], axis=-1)[..., 0]
    oy = np.arange(oh)[:, None]
    ox = np.arange(ow)[None, :]
    iy = oy * stride - padding + local // k
    ix = ox * stride - padding + local % k
    idx = (iy * w + ix).astype(np.int64)
    return np.ascontiguousarray(out), np.ascontiguousarray(idx)


def maxpool_backward(gout, idx, h, w):
    """Scatter-add gout into the argmax positions recorded by maxpool_forward."""
    n, c = gout.shape[:2]
    gin = np.zeros((n, c, h * w), dtype=gout.dtype)
    np.add.at(gin, (np.arange(n)[:, None, None, None],
                    np.arange(c)[None, :, None, None], idx), gout)
    return gin.reshape(n, c, h, w)
