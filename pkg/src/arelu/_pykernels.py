"""Pure-numpy implementations of the hot kernels.

Signatures mirror ``_ckernels`` exactly: outputs go into caller-provided
buffers. Used when the compiled extension is unavailable or disabled.
"""
import numpy as np
from numpy.lib.stride_tricks import as_strided


def arelu_forward(x, neg_scale, pos_scale, out):
    dt = x.dtype.type
    np.multiply(x, np.where(x < 0, dt(neg_scale), dt(pos_scale)), out=out)


def arelu_backward(x, d_out, neg_scale, pos_scale, d_x):
    dt = x.dtype.type
    neg = x < 0
    np.multiply(d_out, np.where(neg, dt(neg_scale), dt(pos_scale)), out=d_x)
    prod = x.astype(np.float64) * d_out.astype(np.float64)
    s_neg = float(prod[neg].sum())
    s_pos = float(prod[~neg].sum())
    return s_neg, s_pos


def _windows(x, kh, kw, stride, ho, wo):
    n, c, _, _ = x.shape
    sn, sc, sh, sw = x.strides
    return as_strided(
        x,
        shape=(n, c, kh, kw, ho, wo),
        strides=(sn, sc, sh, sw, stride * sh, stride * sw),
        writeable=False,
    )


def im2col(x, kh, kw, stride, pad, cols):
    n, c, h, w = x.shape
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (w + 2 * pad - kw) // stride + 1
    # cols layout: [c, kh, kw | n, ho, wo]
    cols.reshape(c, kh, kw, n, ho, wo)[...] = _windows(x, kh, kw, stride, ho, wo).transpose(1, 2, 3, 0, 4, 5)


def col2im(cols, kh, kw, stride, pad, dx):
    n, c, h, w = dx.shape
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (w + 2 * pad - kw) // stride + 1
    padded = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=dx.dtype)
    blocks = cols.reshape(c, kh, kw, n, ho, wo).transpose(3, 0, 1, 2, 4, 5)
    for i in range(kh):
        for j in range(kw):
            padded[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += blocks[:, :, i, j]
    dx += padded[:, :, pad:pad + h, pad:pad + w]


def maxpool_forward(x, k, stride, out, argmax):
    n, c, h, w = x.shape
    ho, wo = out.shape[2], out.shape[3]
    win = _windows(x, k, k, stride, ho, wo)                  # n, c, k, k, ho, wo
    flat = win.transpose(0, 1, 4, 5, 2, 3).reshape(n, c, ho, wo, k * k)
    local = flat.argmax(axis=-1)                              # first max = lowest index
    out[...] = np.take_along_axis(flat, local[..., None], axis=-1)[..., 0]
    oy = np.arange(ho)[:, None] * stride
    ox = np.arange(wo)[None, :] * stride
    argmax[...] = (oy + local // k) * w + ox + local % k


def maxpool_backward(d_out, argmax, dx):
    n, c, h, w = dx.shape
    plane = dx.reshape(n * c, h * w)
    rows = np.repeat(np.arange(n * c), d_out.shape[2] * d_out.shape[3])
    np.add.at(plane, (rows, argmax.reshape(-1)), d_out.reshape(-1))
