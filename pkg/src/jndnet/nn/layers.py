"""Layer zoo with explicit forward caches and analytic backward passes.

Layers are thin parameter holders; ``forward`` returns ``(y, cache)`` and
``backward`` returns ``(gx, [(param, grad), ...])`` so a shared backbone
can run several forward passes and accumulate gradients across them. Use
:func:`accumulate` to add the returned gradients into ``Param.grad``.
"""

from __future__ import annotations

import numpy as np

from . import backend as K

BN_EPS = 1e-5
BN_MOMENTUM = 0.99


class Param:
    """A named trainable array with its accumulated gradient."""

    __slots__ = ("name", "value", "grad", "trainable")

    def __init__(self, name, value, trainable=True):
        self.name = name
        self.value = value
        self.grad = np.zeros_like(value)
        self.trainable = trainable

    def zero_grad(self):
        self.grad[...] = 0.0


def accumulate(pgrads):
    """Add layer-returned gradients into the params (frozen ones stay 0)."""
    for p, g in pgrads:
        if p.trainable:
            p.grad += g


# --- functional ops ---------------------------------------------------------


def relu_forward(x):
    y = np.maximum(x, 0.0)
    return y, (x > 0.0)


def relu_backward(gy, cache):
    return gy * cache


def upsample2x_forward(x):
    y = np.repeat(np.repeat(x, 2, axis=1), 2, axis=2)
    return y, x.shape


def upsample2x_backward(gy, cache):
    n, h, w, c = cache
    return gy.reshape(n, h, 2, w, 2, c).sum(axis=(2, 4))


def concat_forward(xs):
    sizes = [x.shape[-1] for x in xs]
    return np.concatenate(xs, axis=-1), sizes


def concat_backward(gy, sizes):
    return np.split(gy, np.cumsum(sizes)[:-1], axis=-1)


def softmax_forward(x):
    """Channel-wise softmax per pixel, stable for large logits."""
    z = x - x.max(axis=-1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=-1, keepdims=True)
    return p, p


def softmax_backward(gp, p):
    dot = (gp * p).sum(axis=-1, keepdims=True)
    return p * (gp - dot)


def spatial_dropout_forward(x, p, rng, training):
    """Zero whole channels with probability ``p`` (inverted scaling)."""
    if not training or p == 0.0:
        return x, None
    keep = 1.0 - p
    mask = (rng.random((x.shape[0], 1, 1, x.shape[-1])) < keep).astype(x.dtype) / keep
    return x * mask, mask


def spatial_dropout_backward(gy, mask):
    if mask is None:
        return gy
    return gy * mask


def batchnorm_forward(x, gamma, beta, running_mean, running_var, training,
                      momentum=BN_MOMENTUM, eps=BN_EPS, update_running=True):
    """Per-channel normalization over (N, H, W).

    In training mode normalizes with batch statistics and (optionally)
    updates the running buffers in place; in inference mode uses the
    running statistics.
    """
    if training:
        mu = x.mean(axis=(0, 1, 2))
        var = x.var(axis=(0, 1, 2))
        if update_running:
            running_mean *= momentum
            running_mean += (1.0 - momentum) * mu
            running_var *= momentum
            running_var += (1.0 - momentum) * var
        invstd = 1.0 / np.sqrt(var + eps)
        xhat = (x - mu) * invstd
        return gamma * xhat + beta, ("train", xhat, invstd, gamma)
    invstd = 1.0 / np.sqrt(running_var + eps)
    xhat = (x - running_mean) * invstd
    return gamma * xhat + beta, ("eval", invstd, gamma)


def batchnorm_backward(gy, cache):
    if cache[0] == "eval":
        _, invstd, gamma = cache
        return gy * gamma * invstd, None, None
    _, xhat, invstd, gamma = cache
    m = gy.shape[0] * gy.shape[1] * gy.shape[2]
    ggamma = (gy * xhat).sum(axis=(0, 1, 2))
    gbeta = gy.sum(axis=(0, 1, 2))
    gxhat = gy * gamma
    gx = (invstd / m) * (
        m * gxhat
        - gxhat.sum(axis=(0, 1, 2))
        - xhat * (gxhat * xhat).sum(axis=(0, 1, 2))
    )
    return gx, ggamma, gbeta


# --- layer classes -----------------------------------------------------------


class Conv2d:
    """2D convolution, NHWC layout, 'same' padding for odd kernels."""

    def __init__(self, cin, cout, kernel=3, stride=1, rng=None, name="conv",
                 dtype=np.float32):
        self.kernel, self.stride = kernel, stride
        self.pad = (kernel - 1) // 2
        rng = rng or np.random.default_rng(0)
        scale = np.sqrt(2.0 / (kernel * kernel * cin))
        w = rng.normal(0.0, scale, size=(kernel, kernel, cin, cout)).astype(dtype)
        self.w = Param(f"{name}.w", w)
        self.b = Param(f"{name}.b", np.zeros(cout, dtype=dtype))

    def forward(self, x, training=False, rng=None):
        y = K.conv2d_forward(x, self.w.value, self.b.value, self.stride, self.pad)
        return y, (x.shape, x)

    def backward(self, gy, cache):
        x_shape, x = cache
        gx = K.conv2d_backward_input(gy, self.w.value, self.stride, self.pad, x_shape)
        gw = K.conv2d_backward_weights(x, gy, self.stride, self.pad, self.w.value.shape)
        gb = gy.sum(axis=(0, 1, 2))
        return gx, [(self.w, gw), (self.b, gb)]

    def params(self):
        return [self.w, self.b]


class BatchNorm:
    def __init__(self, channels, name="bn", dtype=np.float32, momentum=BN_MOMENTUM):
        self.gamma = Param(f"{name}.gamma", np.ones(channels, dtype=dtype))
        self.beta = Param(f"{name}.beta", np.zeros(channels, dtype=dtype))
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)
        self.momentum = momentum
        self.freeze_stats = False

    def forward(self, x, training=False, rng=None):
        return batchnorm_forward(
            x, self.gamma.value, self.beta.value,
            self.running_mean, self.running_var,
            training=training and not self.freeze_stats,
            momentum=self.momentum,
            update_running=training and not self.freeze_stats,
        )

    def backward(self, gy, cache):
        gx, ggamma, gbeta = batchnorm_backward(gy, cache)
        if ggamma is None:
            return gx, []
        return gx, [(self.gamma, ggamma), (self.beta, gbeta)]

    def params(self):
        return [self.gamma, self.beta]

    def buffers(self):
        return [
            (self.gamma.name.rsplit(".", 1)[0] + ".running_mean", self.running_mean),
            (self.gamma.name.rsplit(".", 1)[0] + ".running_var", self.running_var),
        ]


class ReLU:
    def forward(self, x, training=False, rng=None):
        return relu_forward(x)

    def backward(self, gy, cache):
        return relu_backward(gy, cache), []

    def params(self):
        return []


class MaxPool2x2:
    def forward(self, x, training=False, rng=None):
        y, idx = K.maxpool2x2_forward(x)
        return y, (idx, x.shape)

    def backward(self, gy, cache):
        idx, x_shape = cache
        return K.maxpool2x2_backward(gy, idx, x_shape), []

    def params(self):
        return []


class Upsample2x:
    def forward(self, x, training=False, rng=None):
        return upsample2x_forward(x)

    def backward(self, gy, cache):
        return upsample2x_backward(gy, cache), []

    def params(self):
        return []


class SpatialDropout:
    """Channel dropout; identity at inference (inverted scaling in training)."""

    def __init__(self, p=0.75):
        self.p = p

    def forward(self, x, training=False, rng=None):
        if training and rng is None:
            raise ValueError("spatial dropout needs an rng in training mode")
        return spatial_dropout_forward(x, self.p, rng, training)

    def backward(self, gy, cache):
        return spatial_dropout_backward(gy, cache), []

    def params(self):
        return []


class Softmax:
    def forward(self, x, training=False, rng=None):
        return softmax_forward(x)

    def backward(self, gy, cache):
        return softmax_backward(gy, cache), []

    def params(self):
        return []


class Sequential:
    """Chain of layers with explicit cache passing and grad accumulation."""

    def __init__(self, layers):
        self.layers = list(layers)

    def forward(self, x, training=False, rng=None):
        caches = []
        for layer in self.layers:
            x, cache = layer.forward(x, training=training, rng=rng)
            caches.append(cache)
        return x, caches

    def backward(self, gy, caches):
        for layer, cache in zip(reversed(self.layers), reversed(caches)):
            gy, pgrads = layer.backward(gy, cache)
            accumulate(pgrads)
        return gy

    def params(self):
        out = []
        for layer in self.layers:
            out.extend(layer.params())
        return out

    def buffers(self):
        out = []
        for layer in self.layers:
            if hasattr(layer, "buffers"):
                out.extend(layer.buffers())
        return out
