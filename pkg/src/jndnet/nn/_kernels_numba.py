"""Numba-compiled hot kernels (convolution and pooling inner loops).

All kernels fill caller-allocated output arrays. Accumulation order is
fixed per output element, so results are deterministic regardless of the
thread count.
"""

import numpy as np
from numba import njit, prange


@njit(parallel=True, cache=True)
def conv2d_forward(x, w, b, stride, pad, out):
    n, h, wi, cin = x.shape
    kh, kw, _, cout = w.shape
    oh, ow = out.shape[1], out.shape[2]
    for ni in prange(n):
        for oi in range(oh):
            ibase = oi * stride - pad
            for oj in range(ow):
                jbase = oj * stride - pad
                for co in range(cout):
                    out[ni, oi, oj, co] = b[co]
                for ki in range(kh):
                    ii = ibase + ki
                    if ii < 0 or ii >= h:
                        continue
                    for kj in range(kw):
                        jj = jbase + kj
                        if jj < 0 or jj >= wi:
                            continue
                        for ci in range(cin):
                            v = x[ni, ii, jj, ci]
                            for co in range(cout):
                                out[ni, oi, oj, co] += v * w[ki, kj, ci, co]


@njit(parallel=True, cache=True)
def conv2d_backward_input(gy, w, stride, pad, gx):
    n, oh, ow, cout = gy.shape
    kh, kw, cin, _ = w.shape
    h, wi = gx.shape[1], gx.shape[2]
    # transposed copy so the inner loop runs over contiguous memory
    wt = np.empty((kh, kw, cout, cin), dtype=w.dtype)
    for ki in range(kh):
        for kj in range(kw):
            for ci in range(cin):
                for co in range(cout):
                    wt[ki, kj, co, ci] = w[ki, kj, ci, co]
    for ni in prange(n):
        for oi in range(oh):
            ibase = oi * stride - pad
            for oj in range(ow):
                jbase = oj * stride - pad
                for ki in range(kh):
                    ii = ibase + ki
                    if ii < 0 or ii >= h:
                        continue
                    for kj in range(kw):
                        jj = jbase + kj
                        if jj < 0 or jj >= wi:
                            continue
                        for co in range(cout):
                            g = gy[ni, oi, oj, co]
                            for ci in range(cin):
                                gx[ni, ii, jj, ci] += g * wt[ki, kj, co, ci]


@njit(parallel=True, cache=True)
def conv2d_backward_weights(x, gy, stride, pad, gw):
    n, h, wi, cin = x.shape
    _, oh, ow, cout = gy.shape
    kh, kw = gw.shape[0], gw.shape[1]
    # each thread owns one (ki, kj, ci) slice of gw
    for flat in prange(kh * kw * cin):
        ki = flat // (kw * cin)
        kj = (flat // cin) % kw
        ci = flat % cin
        for ni in range(n):
            for oi in range(oh):
                ii = oi * stride - pad + ki
                if ii < 0 or ii >= h:
                    continue
                for oj in range(ow):
                    jj = oj * stride - pad + kj
                    if jj < 0 or jj >= wi:
                        continue
                    v = x[ni, ii, jj, ci]
                    for co in range(cout):
                        gw[ki, kj, ci, co] += v * gy[ni, oi, oj, co]


@njit(parallel=True, cache=True)
def maxpool2x2_forward(x, out, idx):
    n, h, wi, c = x.shape
    oh, ow = h // 2, wi // 2
    for ni in prange(n):
        for oi in range(oh):
            for oj in range(ow):
                for ci in range(c):
                    best = x[ni, 2 * oi, 2 * oj, ci]
                    pos = 0
                    for di in range(2):
                        for dj in range(2):
                            v = x[ni, 2 * oi + di, 2 * oj + dj, ci]
                            if v > best:
                                best = v
                                pos = 2 * di + dj
                    out[ni, oi, oj, ci] = best
                    idx[ni, oi, oj, ci] = pos


@njit(parallel=True, cache=True)
def maxpool2x2_backward(gy, idx, gx):
    n, oh, ow, c = gy.shape
    for ni in prange(n):
        for oi in range(oh):
            for oj in range(ow):
                for ci in range(c):
                    pos = idx[ni, oi, oj, ci]
                    gx[ni, 2 * oi + pos // 2, 2 * oj + pos % 2, ci] += gy[ni, oi, oj, ci]
