"""Kernel backend selection and allocating wrappers.

The convolution/pooling inner loops dominate training time. They run as
numba-compiled kernels by default; the ``JNDNET_KERNELS`` environment
variable overrides the choice:

- ``JNDNET_KERNELS=numba``: require numba (raise if unavailable)
- ``JNDNET_KERNELS=numpy``: force the pure-numpy im2col path
- unset / ``auto``: numba when importable, numpy otherwise

``benchmarks/bench_kernels.py`` compares the two paths. Results agree to
float accumulation order; per-backend runs are deterministic.
"""

from __future__ import annotations

import os

import numpy as np

_requested = os.environ.get("JNDNET_KERNELS", "auto").strip().lower()
if _requested not in ("auto", "numba", "numpy"):
    raise RuntimeError(
        f"JNDNET_KERNELS must be 'numba', 'numpy' or 'auto', got {_requested!r}"
    )

if _requested == "numpy":
    from . import _kernels_numpy as _impl

    KERNEL_BACKEND = "numpy"
else:
    try:
        from . import _kernels_numba as _impl

        KERNEL_BACKEND = "numba"
    except ImportError:
        if _requested == "numba":
            raise
        from . import _kernels_numpy as _impl

        KERNEL_BACKEND = "numpy"


def set_num_threads(n: int) -> None:
    """Cap kernel parallelism (numba backend only; numpy path ignores it)."""
    if KERNEL_BACKEND == "numba":
        import numba

        numba.set_num_threads(max(1, n))


def conv_out_size(size: int, kernel: int, stride: int, pad: int) -> int:
    return (size + 2 * pad - kernel) // stride + 1


def conv2d_forward(x, w, b, stride=1, pad=0):
    x = np.ascontiguousarray(x)
    n, h, wi, _ = x.shape
    kh, kw, _, cout = w.shape
    oh = conv_out_size(h, kh, stride, pad)
    ow = conv_out_size(wi, kw, stride, pad)
    out = np.empty((n, oh, ow, cout), dtype=x.dtype)
    _impl.conv2d_forward(x, w, b, stride, pad, out)
    return out


def conv2d_backward_input(gy, w, stride, pad, x_shape):
    gy = np.ascontiguousarray(gy)
    gx = np.zeros(x_shape, dtype=gy.dtype)
    _impl.conv2d_backward_input(gy, w, stride, pad, gx)
    return gx


def conv2d_backward_weights(x, gy, stride, pad, w_shape):
    x = np.ascontiguousarray(x)
    gy = np.ascontiguousarray(gy)
    gw = np.zeros(w_shape, dtype=gy.dtype)
    _impl.conv2d_backward_weights(x, gy, stride, pad, gw)
    return gw


def maxpool2x2_forward(x):
    x = np.ascontiguousarray(x)
    n, h, wi, c = x.shape
    if h % 2 or wi % 2:
        raise ValueError(f"maxpool2x2 needs even spatial dims, got {h}x{wi}")
    out = np.empty((n, h // 2, wi // 2, c), dtype=x.dtype)
    idx = np.empty((n, h // 2, wi // 2, c), dtype=np.int8)
    _impl.maxpool2x2_forward(x, out, idx)
    return out, idx


def maxpool2x2_backward(gy, idx, x_shape):
    gy = np.ascontiguousarray(gy)
    gx = np.zeros(x_shape, dtype=gy.dtype)
    _impl.maxpool2x2_backward(gy, idx, gx)
    return gx
