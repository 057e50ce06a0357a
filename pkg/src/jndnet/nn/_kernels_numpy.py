"""Pure-numpy fallback kernels (im2col convolution, windowed pooling).

Signature-compatible with :mod:`._kernels_numba`; selected by setting
``JNDNET_KERNELS=numpy`` or automatically when numba is unavailable.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _padded(x, pad):
    if pad == 0:
        return x
    return np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0)))


def conv2d_forward(x, w, b, stride, pad, out):
    kh, kw = w.shape[0], w.shape[1]
    oh, ow = out.shape[1], out.shape[2]
    xp = _padded(x, pad)
    win = sliding_window_view(xp, (kh, kw), axis=(1, 2))  # (n, H', W', cin, kh, kw)
    win = win[:, :: stride, :: stride][:, :oh, :ow]
    out[...] = np.tensordot(win, w, axes=([3, 4, 5], [2, 0, 1])) + b


def conv2d_backward_input(gy, w, stride, pad, gx):
    n, oh, ow, _ = gy.shape
    kh, kw, cin, _ = w.shape
    h, wi = gx.shape[1], gx.shape[2]
    gxp = np.zeros((n, h + 2 * pad, wi + 2 * pad, cin), dtype=gx.dtype)
    for ki in range(kh):
        for kj in range(kw):
            gxp[:, ki : ki + stride * oh : stride, kj : kj + stride * ow : stride] += (
                gy @ w[ki, kj].T
            )
    gx[...] += gxp[:, pad : pad + h, pad : pad + wi]


def conv2d_backward_weights(x, gy, stride, pad, gw):
    _, oh, ow, _ = gy.shape
    kh, kw = gw.shape[0], gw.shape[1]
    xp = _padded(x, pad)
    for ki in range(kh):
        for kj in range(kw):
            xs = xp[:, ki : ki + stride * oh : stride, kj : kj + stride * ow : stride]
            gw[ki, kj] += np.tensordot(xs, gy, axes=([0, 1, 2], [0, 1, 2]))


def maxpool2x2_forward(x, out, idx):
    n, h, wi, c = x.shape
    oh, ow = h // 2, wi // 2
    win = x.reshape(n, oh, 2, ow, 2, c).transpose(0, 1, 3, 2, 4, 5).reshape(n, oh, ow, 4, c)
    am = win.argmax(axis=3)
    idx[...] = am.astype(idx.dtype)
    out[...] = np.take_along_axis(win, am[:, :, :, None, :], axis=3)[:, :, :, 0, :]


def maxpool2x2_backward(gy, idx, gx):
    n, oh, ow, c = gy.shape
    win = np.zeros((n, oh, ow, 4, c), dtype=gy.dtype)
    np.put_along_axis(win, idx.astype(np.intp)[:, :, :, None, :], gy[:, :, :, None, :], axis=3)
    gx[...] += (
        win.reshape(n, oh, ow, 2, 2, c).transpose(0, 1, 3, 2, 4, 5).reshape(n, 2 * oh, 2 * ow, c)
    )
