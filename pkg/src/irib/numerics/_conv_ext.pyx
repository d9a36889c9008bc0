# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled conv2d kernels: per-image im2col/col2im loops plus BLAS dgemm.

Mirrors ``_conv_py`` exactly in contract; results agree to rounding.
"""
import numpy as np
from scipy.linalg.cython_blas cimport dgemm


cdef void _im2col(const double[:, :, ::1] x, double[:, ::1] cols, int kh, int kw,
                  int stride, int pad, int oh, int ow) noexcept nogil:
    cdef int C = x.shape[0], H = x.shape[1], W = x.shape[2]
    cdef int c, i, j, oy, ox, iy, ix, row
    for c in range(C):
        for i in range(kh):
            for j in range(kw):
                row = (c * kh + i) * kw + j
                for oy in range(oh):
                    iy = oy * stride - pad + i
                    if iy < 0 or iy >= H:
                        for ox in range(ow):
                            cols[row, oy * ow + ox] = 0.0
                        continue
                    for ox in range(ow):
                        ix = ox * stride - pad + j
                        if ix < 0 or ix >= W:
                            cols[row, oy * ow + ox] = 0.0
                        else:
                            cols[row, oy * ow + ox] = x[c, iy, ix]


cdef void _col2im(const double[:, ::1] cols, double[:, :, ::1] gx, int kh, int kw,
                  int stride, int pad, int oh, int ow) noexcept nogil:
    cdef int C = gx.shape[0], H = gx.shape[1], W = gx.shape[2]
    cdef int c, i, j, oy, ox, iy, ix, row
    for c in range(C):
        for i in range(kh):
            for j in range(kw):
                row = (c * kh + i) * kw + j
                for oy in range(oh):
                    iy = oy * stride - pad + i
                    if iy < 0 or iy >= H:
                        continue
                    for ox in range(ow):
                        ix = ox * stride - pad + j
                        if ix >= 0 and ix < W:
                            gx[c, iy, ix] += cols[row, oy * ow + ox]


cdef void _gemm(const double[:, ::1] a, bint ta, const double[:, ::1] b, bint tb,
                double[:, ::1] c, double beta) noexcept nogil:
    # row-major c = op(a) @ op(b) + beta * c, issued as column-major c^T = op(b)^T op(a)^T
    cdef int m = c.shape[0], n = c.shape[1]
    cdef int k = a.shape[0] if ta else a.shape[1]
    cdef double alpha = 1.0
    cdef char tra = b'T' if tb else b'N'
    cdef char trb = b'T' if ta else b'N'
    cdef int lda = b.shape[1], ldb = a.shape[1], ldc = n
    dgemm(&tra, &trb, &n, &m, &k, &alpha, <double*>&b[0, 0], &lda,
          <double*>&a[0, 0], &ldb, &beta, &c[0, 0], &ldc)


def conv2d_forward(const double[:, :, :, ::1] x, const double[:, :, :, ::1] w,
                   int stride, int pad):
    cdef int N = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3]
    cdef int O = w.shape[0], kh = w.shape[2], kw = w.shape[3]
    cdef int oh = (H + 2 * pad - kh) // stride + 1
    cdef int ow = (W + 2 * pad - kw) // stride + 1
    out = np.empty((N, O, oh * ow))
    cdef double[:, :, ::1] o = out
    cdef double[:, ::1] cols = np.empty((C * kh * kw, oh * ow))
    cdef const double[:, ::1] wm = np.asarray(w).reshape(O, C * kh * kw)
    cdef int n
    with nogil:
        for n in range(N):
            _im2col(x[n], cols, kh, kw, stride, pad, oh, ow)
            _gemm(wm, False, cols, False, o[n], 0.0)
    return out.reshape(N, O, oh, ow)


def conv2d_backward(const double[:, :, :, ::1] x, const double[:, :, :, ::1] w,
                    const double[:, :, :, ::1] g, int stride, int pad,
                    bint need_x, bint need_w):
    cdef int N = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3]
    cdef int O = w.shape[0], kh = w.shape[2], kw = w.shape[3]
    cdef int oh = g.shape[2], ow = g.shape[3]
    cdef int K = C * kh * kw
    cdef const double[:, ::1] wm = np.asarray(w).reshape(O, K)
    cdef const double[:, :, ::1] gm = np.asarray(g).reshape(N, O, oh * ow)
    cdef double[:, ::1] cols = np.empty((K, oh * ow))
    gx_arr = np.zeros((N, C, H, W)) if need_x else None
    gw_arr = np.zeros((O, K)) if need_w else None
    cdef double[:, :, :, ::1] gx
    cdef double[:, ::1] gw
    if need_x:
        gx = gx_arr
    if need_w:
        gw = gw_arr
    cdef int n
    with nogil:
        for n in range(N):
            if need_w:
                _im2col(x[n], cols, kh, kw, stride, pad, oh, ow)
                _gemm(gm[n], False, cols, True, gw, 1.0)
            if need_x:
                _gemm(wm, True, gm[n], False, cols, 0.0)
                _col2im(cols, gx[n], kh, kw, stride, pad, oh, ow)
    return gx_arr, (gw_arr.reshape(O, C, kh, kw) if need_w else None)
