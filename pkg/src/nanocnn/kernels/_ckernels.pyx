"""Compiled kernels for the convolution lowering and max-pooling loops.

These are the hot inner loops of the framework. Each function fills a
caller-allocated output buffer; allocation and shape arithmetic live in
the selecting wrapper module so both kernel lanes share one contract.

col2im scatters patch rows back into the image in (ky, kx) order, which
hands every output pixel its contributions in the same fixed sequence a
per-pixel gather would use, so results are deterministic and unchanged
by any future parallel split over n/c.
"""

from libc.math cimport INFINITY
from libc.string cimport memcpy, memset

ctypedef fused real:
    float
    double


def im2col(real[:, :, :, ::1] x, Py_ssize_t kh, Py_ssize_t kw,
           Py_ssize_t stride, Py_ssize_t padding, real[:, :, ::1] out):
    """Fill out[N, C*kh*kw, OH*OW] with zero-padded image patches."""
    cdef Py_ssize_t N = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3]
    cdef Py_ssize_t OH = (H + 2 * padding - kh) // stride + 1
    cdef Py_ssize_t OW = (W + 2 * padding - kw) // stride + 1
    cdef Py_ssize_t n, c, ky, kx, oy, ox, row, iy, base
    cdef Py_ssize_t oy_lo, oy_hi, ox_lo, ox_hi, num, span

    with nogil:
        for n in range(N):
            for c in range(C):
                for ky in range(kh):
                    # oy*stride + ky - padding must land in [0, H)
                    num = padding - ky
                    oy_lo = 0 if num <= 0 else (num + stride - 1) // stride
                    if oy_lo > OH:
                        oy_lo = OH
                    num = H - 1 - ky + padding
                    oy_hi = 0 if num < 0 else num // stride + 1
                    if oy_hi > OH:
                        oy_hi = OH
                    for kx in range(kw):
                        num = padding - kx
                        ox_lo = 0 if num <= 0 else (num + stride - 1) // stride
                        if ox_lo > OW:
                            ox_lo = OW
                        num = W - 1 - kx + padding
                        ox_hi = 0 if num < 0 else num // stride + 1
                        if ox_hi > OW:
                            ox_hi = OW
                        row = (c * kh + ky) * kw + kx
                        span = ox_hi - ox_lo
                        if oy_lo > 0:
                            memset(&out[n, row, 0], 0, oy_lo * OW * sizeof(real))
                        for oy in range(oy_lo, oy_hi):
                            iy = oy * stride + ky - padding
                            base = oy * OW
                            if ox_lo > 0:
                                memset(&out[n, row, base], 0, ox_lo * sizeof(real))
                            if span > 0:
                                if stride == 1:
                                    memcpy(&out[n, row, base + ox_lo],
                                           &x[n, c, iy, ox_lo + kx - padding],
                                           span * sizeof(real))
                                else:
                                    for ox in range(ox_lo, ox_hi):
                                        out[n, row, base + ox] = x[n, c, iy, ox * stride + kx - padding]
                            if ox_hi < OW:
                                memset(&out[n, row, base + ox_hi], 0,
                                       (OW - ox_hi) * sizeof(real))
                        if oy_hi < OH:
                            memset(&out[n, row, oy_hi * OW], 0,
                                   (OH - oy_hi) * OW * sizeof(real))


def col2im(real[:, :, ::1] cols, Py_ssize_t H, Py_ssize_t W,
           Py_ssize_t kh, Py_ssize_t kw, Py_ssize_t stride, Py_ssize_t padding,
           real[:, :, :, ::1] out):
    """Adjoint of im2col: accumulate cols[N, C*kh*kw, OH*OW] into out[N, C, H, W].

    Scattering row by row keeps the cols reads sequential; each output
    pixel still collects its terms in ascending (ky, kx) order, exactly
    as a per-pixel gather would.
    """
    cdef Py_ssize_t N = out.shape[0], C = out.shape[1]
    cdef Py_ssize_t OH = (H + 2 * padding - kh) // stride + 1
    cdef Py_ssize_t OW = (W + 2 * padding - kw) // stride + 1
    cdef Py_ssize_t n, c, ky, kx, oy, ox, row, iy, base, i, span
    cdef Py_ssize_t oy_lo, oy_hi, ox_lo, ox_hi, num
    cdef real *dst
    cdef real *src

    with nogil:
        for n in range(N):
            for c in range(C):
                for iy in range(H):
                    memset(&out[n, c, iy, 0], 0, W * sizeof(real))
                for ky in range(kh):
                    num = padding - ky
                    oy_lo = 0 if num <= 0 else (num + stride - 1) // stride
                    num = H - 1 - ky + padding
                    oy_hi = 0 if num < 0 else num // stride + 1
                    if oy_hi > OH:
                        oy_hi = OH
                    for kx in range(kw):
                        num = padding - kx
                        ox_lo = 0 if num <= 0 else (num + stride - 1) // stride
                        num = W - 1 - kx + padding
                        ox_hi = 0 if num < 0 else num // stride + 1
                        if ox_hi > OW:
                            ox_hi = OW
                        span = ox_hi - ox_lo
                        if span <= 0:
                            continue
                        row = (c * kh + ky) * kw + kx
                        for oy in range(oy_lo, oy_hi):
                            iy = oy * stride + ky - padding
                            base = oy * OW
                            if stride == 1:
                                dst = &out[n, c, iy, ox_lo + kx - padding]
                                src = &cols[n, row, base + ox_lo]
                                for i in range(span):
                                    dst[i] = dst[i] + src[i]
                            else:
                                for ox in range(ox_lo, ox_hi):
                                    out[n, c, iy, ox * stride + kx - padding] += cols[n, row, base + ox]


def maxpool_forward(real[:, :, :, ::1] x, Py_ssize_t k, Py_ssize_t stride,
                    Py_ssize_t padding, real[:, :, :, ::1] out,
                    long long[:, :, :, ::1] idx):
    """Max over k x k windows; idx records the winning flat position (iy*W + ix).

    Padding cells act as -inf and can never win; ties break to the first
    element in row-major window scan order.
    """
    cdef Py_ssize_t N = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3]
    cdef Py_ssize_t OH = out.shape[2], OW = out.shape[3]
    cdef Py_ssize_t n, c, oy, ox, iy, ix, iy0, ix0, iy_lo, iy_hi, ix_lo, ix_hi
    cdef real best, v
    cdef long long bestpos

    with nogil:
        for n in range(N):
            for c in range(C):
                for oy in range(OH):
                    iy0 = oy * stride - padding
                    iy_lo = iy0 if iy0 > 0 else 0
                    iy_hi = iy0 + k if iy0 + k < H else H
                    for ox in range(OW):
                        ix0 = ox * stride - padding
                        ix_lo = ix0 if ix0 > 0 else 0
                        ix_hi = ix0 + k if ix0 + k < W else W
                        best = -INFINITY
                        bestpos = -1
                        for iy in range(iy_lo, iy_hi):
                            for ix in range(ix_lo, ix_hi):
                                v = x[n, c, iy, ix]
                                if v > best:
                                    best = v
                                    bestpos = iy * W + ix
                        out[n, c, oy, ox] = best
                        idx[n, c, oy, ox] = bestpos


def maxpool_backward(real[:, :, :, ::1] gout, long long[:, :, :, ::1] idx,
                     real[:, :, :, ::1] gin):
    """Scatter-add gout into the argmax positions recorded by maxpool_forward.

    gin must be zero-initialized; overlapping windows accumulate in output
    scan order within each (n, c) plane.
    """
    cdef Py_ssize_t N = gout.shape[0], C = gout.shape[1]
    cdef Py_ssize_t OH = gout.shape[2], OW = gout.shape[3]
    cdef Py_ssize_t W = gin.shape[3]
    cdef Py_ssize_t n, c, oy, ox
    cdef long long pos

    with nogil:
        for n in range(N):
            for c in range(C):
                for oy in range(OH):
                    for ox in range(OW):
                        pos = idx[n, c, oy, ox]
                        gin[n, c, pos // W, pos % W] = gin[n, c, pos // W, pos % W] + gout[n, c, oy, ox]
