# cython: language_level=3
"""Compiled hot loops: fused AReLU forward/backward, im2col/col2im, max-pooling.

Every routine writes into caller-allocated, C-contiguous buffers. Reductions
accumulate sequentially in double precision, so results are deterministic.
"""
cimport cython
from cython cimport floating
from libc.stdint cimport int64_t


def arelu_forward(const floating[::1] x, double neg_scale, double pos_scale,
                  floating[::1] out):
    cdef Py_ssize_t i, n = x.shape[0]
    cdef floating v
    cdef floating neg = <floating>neg_scale
    cdef floating pos = <floating>pos_scale
    with nogil:
        for i in range(n):
            v = x[i]
            if v < 0:
                out[i] = neg * v
            else:
                out[i] = pos * v


def arelu_backward(const floating[::1] x, const floating[::1] d_out,
                   double neg_scale, double pos_scale, floating[::1] d_x):
    """Write d_x and return (sum of x*d_out over x<0, sum of x*d_out over x>=0)."""
    cdef Py_ssize_t i, n = x.shape[0]
    cdef floating v, g
    cdef floating neg = <floating>neg_scale
    cdef floating pos = <floating>pos_scale
    cdef double s_neg = 0.0, s_pos = 0.0
    with nogil:
        for i in range(n):
            v = x[i]
            g = d_out[i]
            if v < 0:
                d_x[i] = neg * g
                s_neg += <double>v * <double>g
            else:
                d_x[i] = pos * g
                s_pos += <double>v * <double>g
    return s_neg, s_pos


def im2col(const floating[:, :, :, ::1] x, int kh, int kw, int stride, int pad,
           floating[:, ::1] cols):
    """cols[(c*kh + i)*kw + j, (n*ho + oy)*wo + ox] = x_padded[n, c, oy*stride + i, ox*stride + j]."""
    cdef Py_ssize_t n_batch = x.shape[0], n_ch = x.shape[1]
    cdef Py_ssize_t h = x.shape[2], w = x.shape[3]
    cdef Py_ssize_t ho = (h + 2 * pad - kh) // stride + 1
    cdef Py_ssize_t wo = (w + 2 * pad - kw) // stride + 1
    cdef Py_ssize_t n, c, i, j, oy, ox, iy, ix, row, base
    with nogil:
        for c in range(n_ch):
            for i in range(kh):
                for j in range(kw):
                    row = (c * kh + i) * kw + j
                    for n in range(n_batch):
                        for oy in range(ho):
                            base = (n * ho + oy) * wo
                            iy = oy * stride + i - pad
                            if iy < 0 or iy >= h:
                                for ox in range(wo):
                                    cols[row, base + ox] = 0
                                continue
                            for ox in range(wo):
                                ix = ox * stride + j - pad
                                if ix < 0 or ix >= w:
                                    cols[row, base + ox] = 0
                                else:
                                    cols[row, base + ox] = x[n, c, iy, ix]


def col2im(const floating[:, ::1] cols, int kh, int kw, int stride, int pad,
           floating[:, :, :, ::1] dx):
    """Adjoint of im2col; dx must be zero-filled by the caller."""
    cdef Py_ssize_t n_batch = dx.shape[0], n_ch = dx.shape[1]
    cdef Py_ssize_t h = dx.shape[2], w = dx.shape[3]
    cdef Py_ssize_t ho = (h + 2 * pad - kh) // stride + 1
    cdef Py_ssize_t wo = (w + 2 * pad - kw) // stride + 1
    cdef Py_ssize_t n, c, i, j, oy, ox, iy, ix, row, base
    with nogil:
        for c in range(n_ch):
            for i in range(kh):
                for j in range(kw):
                    row = (c * kh + i) * kw + j
                    for n in range(n_batch):
                        for oy in range(ho):
                            iy = oy * stride + i - pad
                            if iy < 0 or iy >= h:
                                continue
                            base = (n * ho + oy) * wo
                            for ox in range(wo):
                                ix = ox * stride + j - pad
                                if ix >= 0 and ix < w:
                                    dx[n, c, iy, ix] += cols[row, base + ox]


def maxpool_forward(const floating[:, :, :, ::1] x, int k, int stride,
                    floating[:, :, :, ::1] out, int64_t[:, :, :, ::1] argmax):
    """argmax holds the winner's flat index inside its (H, W) plane; ties keep the lowest index."""
    cdef Py_ssize_t n_batch = x.shape[0], n_ch = x.shape[1]
    cdef Py_ssize_t w = x.shape[3]
    cdef Py_ssize_t ho = out.shape[2], wo = out.shape[3]
    cdef Py_ssize_t n, c, oy, ox, i, j, y0, x0, best_idx
    cdef floating best, v
    with nogil:
        for n in range(n_batch):
            for c in range(n_ch):
                for oy in range(ho):
                    y0 = oy * stride
                    for ox in range(wo):
                        x0 = ox * stride
                        best = x[n, c, y0, x0]
                        best_idx = y0 * w + x0
                        for i in range(k):
                            for j in range(k):
                                v = x[n, c, y0 + i, x0 + j]
                                if v > best:
                                    best = v
                                    best_idx = (y0 + i) * w + x0 + j
                        out[n, c, oy, ox] = best
                        argmax[n, c, oy, ox] = best_idx


def maxpool_backward(const floating[:, :, :, ::1] d_out, const int64_t[:, :, :, ::1] argmax,
                     floating[:, :, :, ::1] dx):
    """Scatter-add d_out into dx (zero-filled by the caller) at the argmax positions."""
    cdef Py_ssize_t n_batch = d_out.shape[0], n_ch = d_out.shape[1]
    cdef Py_ssize_t ho = d_out.shape[2], wo = d_out.shape[3]
    cdef Py_ssize_t w = dx.shape[3]
    cdef Py_ssize_t n, c, oy, ox, idx
    with nogil:
        for n in range(n_batch):
            for c in range(n_ch):
                for oy in range(ho):
                    for ox in range(wo):
                        idx = argmax[n, c, oy, ox]
                        dx[n, c, idx // w, idx % w] += d_out[n, c, oy, ox]
