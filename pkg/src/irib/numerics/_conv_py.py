"""Pure-numpy conv2d kernels (fallback for the compiled core)."""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _cols(x, kh, kw, stride, pad):
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    win = sliding_window_view(x, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    n, c, oh, ow = win.shape[:4]
    # (N, C*KH*KW, OH*OW), row order matches w.reshape(O, C*KH*KW)
    return win.transpose(0, 1, 4, 5, 2, 3).reshape(n, c * kh * kw, oh * ow), oh, ow


def conv2d_forward(x, w, stride, pad):
    o, c, kh, kw = w.shape
    cols, oh, ow = _cols(x, kh, kw, stride, pad)
    out = np.matmul(w.reshape(o, -1), cols)
    return out.reshape(x.shape[0], o, oh, ow)


def conv2d_backward(x, w, g, stride, pad, need_x, need_w):
    n, c, h, wd = x.shape
    o, _, kh, kw = w.shape
    oh, ow = g.shape[2], g.shape[3]
    gm = g.reshape(n, o, oh * ow)
    gx = gw = None
    if need_w:
        cols, _, _ = _cols(x, kh, kw, stride, pad)
        gw = np.zeros((o, c * kh * kw))
        for i in range(n):
            gw += gm[i] @ cols[i].T
        gw = gw.reshape(w.shape)
    if need_x:
        gcols = np.matmul(w.reshape(o, -1).T, gm).reshape(n, c, kh, kw, oh, ow)
        hp, wp = h + 2 * pad, wd + 2 * pad
        gxp = np.zeros((n, c, hp, wp))
        for i in range(kh):
            for j in range(kw):
                gxp[:, :, i:i + stride * oh:stride, j:j + stride * ow:stride] += gcols[:, :, i, j]
        gx = gxp[:, :, pad:pad + h, pad:pad + wd]
        gx = np.ascontiguousarray(gx)
    return gx, gw
