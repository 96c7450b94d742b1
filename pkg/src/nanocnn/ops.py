"""Differentiable operators.

Every function takes Nodes (plus plain config arguments), computes the
forward value with numpy/kernel calls, and registers a backward closure
through make_node. Operators follow the dtype of their inputs.

Convolution is lowered to im2col + batched matmul, grouped via the
channel-major column layout (rows ordered (c*kh + ky)*kw + kx, so each
group's rows are contiguous). The batch is processed in chunks so the
column buffer stays within a fixed budget; backward recomputes columns
per chunk instead of keeping them alive.
"""

import numpy as np

from . import kernels
from .autograd import Node, accumulate, make_node
from .errors import InvalidArgumentError

# cap on the im2col scratch buffer; backward recomputes rather than caches
_COLS_BUDGET_BYTES = 128 * 2**20


def _require(cond, message):
    if not cond:
        raise InvalidArgumentError(message)


def _out_extent(size, k, stride, padding):
    return (size + 2 * padding - k) // stride + 1


def _batch_chunk(rows, length, itemsize):
    per_sample = rows * length * itemsize
    return max(1, _COLS_BUDGET_BYTES // max(1, per_sample))


def conv2d(x, weight, bias=None, stride=1, padding=0, groups=1):
    """2-d convolution (cross-correlation) on NCHW input.

    weight has shape (c_out, c_in // groups, kh, kw); bias, if given, has
    shape (c_out,). Supports strided, zero-padded, and grouped forms; a
    1x1 unpadded kernel skips the im2col lowering entirely.
    """
    xv, wv = x.value, weight.value
    _require(xv.ndim == 4, f"conv2d input must be NCHW, got shape {xv.shape}")
    _require(wv.ndim == 4, f"conv2d weight must be 4-d, got shape {wv.shape}")
    _require(stride >= 1, f"stride must be >= 1, got {stride}")
    _require(padding >= 0, f"padding must be >= 0, got {padding}")
    _require(groups >= 1, f"groups must be >= 1, got {groups}")
    n, c, h, w = xv.shape
    c_out, cpg, kh, kw = wv.shape
    _require(c == cpg * groups,
             f"weight expects {cpg * groups} input channels, input has {c}")
    _require(c_out % groups == 0,
             f"c_out {c_out} not divisible by groups {groups}")
    _require(xv.dtype == wv.dtype,
             f"dtype mismatch: input {xv.dtype}, weight {wv.dtype}")
    if bias is not None:
        _require(bias.value.shape == (c_out,),
                 f"bias must have shape ({c_out},), got {bias.value.shape}")
    oh = _out_extent(h, kh, stride, padding)
    ow = _out_extent(w, kw, stride, padding)
    _require(oh >= 1 and ow >= 1,
             f"kernel {kh}x{kw} too large for input {h}x{w} with padding {padding}")
    length = oh * ow
    cout_pg = c_out // groups
    kk = cpg * kh * kw
    one_by_one = kh == 1 and kw == 1 and padding == 0
    wm = wv.reshape(groups, cout_pg, kk)

    def lower(block):
        if one_by_one:
            sl = block[:, :, ::stride, ::stride]
            return np.ascontiguousarray(sl).reshape(block.shape[0], c, length)
        return kernels.im2col(block, kh, kw, stride, padding)

    chunk = _batch_chunk(c * kh * kw, length, xv.itemsize)
    out = np.empty((n, c_out, oh, ow), dtype=xv.dtype)
    for i in range(0, n, chunk):
        cols = lower(xv[i:i + chunk])
        m = cols.shape[0]
        grouped = np.matmul(wm[None], cols.reshape(m, groups, kk, length))
        out[i:i + m] = grouped.reshape(m, c_out, oh, ow)
    if bias is not None:
        out += bias.value.reshape(1, c_out, 1, 1)

    parents = (x, weight) if bias is None else (x, weight, bias)

    def _bw(g):
        gm = g.reshape(n, groups, cout_pg, length)
        need_x = x.requires_grad
        need_w = weight.requires_grad
        gw = np.zeros((groups, cout_pg, kk), dtype=wv.dtype) if need_w else None
        gx = np.empty_like(xv) if need_x else None
        wmt = wm.transpose(0, 2, 1) if need_x else None
        for i in range(0, n, chunk):
            m = min(chunk, n - i)
            gchunk = gm[i:i + m]
            if need_w:
                cols = lower(xv[i:i + m]).reshape(m, groups, kk, length)
                gw += np.matmul(gchunk, cols.transpose(0, 1, 3, 2)).sum(axis=0)
            if need_x:
                gcols = np.matmul(wmt[None], gchunk).reshape(m, c * kh * kw, length)
                if one_by_one:
                    block = np.zeros((m, c, h, w), dtype=xv.dtype)
                    block[:, :, ::stride, ::stride] = gcols.reshape(m, c, oh, ow)
                    gx[i:i + m] = block
                else:
                    gx[i:i + m] = kernels.col2im(gcols, c, h, w, kh, kw,
                                                 stride, padding)
        if need_x:
            accumulate(x, gx)
        if need_w:
            accumulate(weight, gw.reshape(wv.shape))
        if bias is not None:
            accumulate(bias, g.sum(axis=(0, 2, 3)))

    return make_node(out, "conv2d", parents, _bw)


def max_pool2d(x, k, stride=None, padding=0):
    """Max pooling over k x k windows; stride defaults to k.

    Padding cells behave as -inf; with padding < k every window still
    covers at least one real cell. Ties pick the first cell in row-major
    window order, and the gradient flows only to the recorded winner.
    """
    if stride is None:
        stride = k
    xv = x.value
    _require(xv.ndim == 4, f"max_pool2d input must be NCHW, got shape {xv.shape}")
    _require(k >= 1, f"kernel size must be >= 1, got {k}")
    _require(stride >= 1, f"stride must be >= 1, got {stride}")
    _require(0 <= padding < k, f"padding must be in [0, {k}), got {padding}")
    n, c, h, w = xv.shape
    oh = _out_extent(h, k, stride, padding)
    ow = _out_extent(w, k, stride, padding)
    _require(oh >= 1 and ow >= 1,
             f"window {k} too large for input {h}x{w} with padding {padding}")
    out, idx = kernels.maxpool_forward(xv, k, stride, padding)

    def _bw(g):
        accumulate(x, kernels.maxpool_backward(np.ascontiguousarray(g), idx, h, w))

    return make_node(out, "max_pool2d", (x,), _bw)


def adaptive_avg_pool_1x1(x):
    """Global average pooling to a 1x1 spatial map."""
    xv = x.value
    _require(xv.ndim == 4, f"input must be NCHW, got shape {xv.shape}")
    n, c, h, w = xv.shape
    out = xv.mean(axis=(2, 3), keepdims=True)

    def _bw(g):
        scale = g / np.asarray(h * w, dtype=xv.dtype)
        accumulate(x, np.ascontiguousarray(np.broadcast_to(scale, xv.shape)))

    return make_node(out, "adaptive_avg_pool_1x1", (x,), _bw)


def batch_norm2d(x, gamma, beta, running_mean, running_var, training,
                 momentum=0.1, eps=1e-5):
    """Per-channel batch normalization on NCHW input.

    In training mode the batch is normalized with its own biased variance
    and the running buffers (plain arrays, updated in place) move by
    running <- (1 - momentum) * running + momentum * batch, where the
    variance stored is the unbiased estimate. In eval mode the running
    statistics normalize instead and no buffer changes.
    """
    xv = x.value
    _require(xv.ndim == 4, f"batch_norm2d input must be NCHW, got shape {xv.shape}")
    n, c, h, w = xv.shape
    _require(gamma.value.shape == (c,),
             f"gamma must have shape ({c},), got {gamma.value.shape}")
    _require(beta.value.shape == (c,),
             f"beta must have shape ({c},), got {beta.value.shape}")
    _require(running_mean.shape == (c,) and running_var.shape == (c,),
             "running statistics must have shape (c,)")
    axes = (0, 2, 3)
    m = n * h * w
    if training:
        mean = xv.mean(axis=axes)
        var = xv.var(axis=axes)
        unbiased = var * (m / (m - 1)) if m > 1 else var
        running_mean[...] = (1.0 - momentum) * running_mean + momentum * mean
        running_var[...] = (1.0 - momentum) * running_var + momentum * unbiased
    else:
        mean = running_mean.astype(xv.dtype, copy=False)
        var = running_var.astype(xv.dtype, copy=False)
    inv = 1.0 / np.sqrt(var + eps)
    mean_b = mean.reshape(1, c, 1, 1).astype(xv.dtype, copy=False)
    inv_b = inv.reshape(1, c, 1, 1).astype(xv.dtype, copy=False)
    out = (gamma.value.reshape(1, c, 1, 1) * ((xv - mean_b) * inv_b)
           + beta.value.reshape(1, c, 1, 1))

    def _bw(g):
        # recomputed here instead of being kept alive through the forward pass
        xhat = (xv - mean_b) * inv_b
        if gamma.requires_grad:
            accumulate(gamma, (g * xhat).sum(axis=axes))
        if beta.requires_grad:
            accumulate(beta, g.sum(axis=axes))
        if not x.requires_grad:
            return
        gscaled = g * gamma.value.reshape(1, c, 1, 1)
        if training:
            mean_g = gscaled.mean(axis=axes, keepdims=True)
            mean_gx = (gscaled * xhat).mean(axis=axes, keepdims=True)
            dx = inv_b * (gscaled - mean_g - xhat * mean_gx)
        else:
            dx = gscaled * inv_b
        accumulate(x, dx)

    return make_node(out, "batch_norm2d", (x, gamma, beta), _bw)


def relu(x):
    """Elementwise max(x, 0); the gradient at exactly 0 is 0."""
    xv = x.value
    out = np.maximum(xv, 0)

    def _bw(g):
        # out > 0 agrees with xv > 0, including the zero point
        accumulate(x, g * (out > 0))

    return make_node(out, "relu", (x,), _bw)


def linear(x, weight, bias=None):
    """Affine map on (n, d_in) input; weight has shape (d_out, d_in)."""
    xv, wv = x.value, weight.value
    _require(xv.ndim == 2, f"linear input must be 2-d, got shape {xv.shape}")
    _require(wv.ndim == 2, f"linear weight must be 2-d, got shape {wv.shape}")
    _require(xv.shape[1] == wv.shape[1],
             f"linear expects {wv.shape[1]} features, input has {xv.shape[1]}")
    if bias is not None:
        _require(bias.value.shape == (wv.shape[0],),
                 f"bias must have shape ({wv.shape[0]},), got {bias.value.shape}")
    out = xv @ wv.T
    if bias is not None:
        out = out + bias.value

    def _bw(g):
        if x.requires_grad:
            accumulate(x, g @ wv)
        if weight.requires_grad:
            accumulate(weight, g.T @ xv)
        if bias is not None:
            accumulate(bias, g.sum(axis=0))

    parents = (x, weight) if bias is None else (x, weight, bias)
    return make_node(out, "linear", parents, _bw)


def flatten(x):
    """Collapse all but the leading (batch) axis."""
    xv = x.value
    _require(xv.ndim >= 2, f"flatten needs a batch axis, got shape {xv.shape}")
    out = xv.reshape(xv.shape[0], -1)

    def _bw(g):
        accumulate(x, g.reshape(xv.shape))

    return make_node(out, "flatten", (x,), _bw)


def add(a, b):
    """Elementwise sum of two same-shape values (residual junctions)."""
    _require(a.value.shape == b.value.shape,
             f"add requires matching shapes, got {a.value.shape} and {b.value.shape}")
    out = a.value + b.value

    def _bw(g):
        accumulate(a, g)
        accumulate(b, g)

    return make_node(out, "add", (a, b), _bw)


def softmax(logits):
    """Row-wise softmax of a plain (n, c) array, shifted for stability."""
    z = np.asarray(logits)
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def softmax_cross_entropy(logits, targets):
    """Mean cross-entropy between row-wise softmax and integer targets.

    Computed via the log-sum-exp shift, so large logits stay finite. The
    gradient is (softmax - onehot) / n.
    """
    zv = logits.value
    _require(zv.ndim == 2, f"logits must be 2-d, got shape {zv.shape}")
    t = np.asarray(targets)
    _require(t.ndim == 1 and t.shape[0] == zv.shape[0],
             f"targets must be 1-d of length {zv.shape[0]}, got shape {t.shape}")
    _require(np.issubdtype(t.dtype, np.integer), "targets must be integers")
    n, c = zv.shape
    _require(bool((t >= 0).all() and (t < c).all()),
             f"targets must lie in [0, {c})")
    shifted = zv - zv.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    denom = e.sum(axis=1, keepdims=True)
    log_probs = shifted - np.log(denom)
    value = -log_probs[np.arange(n), t].mean()

    def _bw(g):
        p = e / denom
        p[np.arange(n), t] -= 1.0
        accumulate(logits, (g * p) / np.asarray(n, dtype=zv.dtype))

    return make_node(value, "softmax_cross_entropy", (logits,), _bw)


def sum_all(x):
    """Sum every element down to a scalar."""
    xv = x.value
    out = xv.sum()

    def _bw(g):
        accumulate(x, np.ascontiguousarray(np.broadcast_to(g, xv.shape)))

    return make_node(out, "sum_all", (x,), _bw)


def mean_all(x):
    """Mean of every element down to a scalar."""
    xv = x.value
    out = xv.mean()

    def _bw(g):
        scale = g / np.asarray(xv.size, dtype=xv.dtype)
        accumulate(x, np.ascontiguousarray(np.broadcast_to(scale, xv.shape)))

    return make_node(out, "mean_all", (x,), _bw)
