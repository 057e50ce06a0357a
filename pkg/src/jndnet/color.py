"""sRGB <-> CIELAB conversion and the masked exposure transform.

Images are real-valued numpy arrays throughout: RGB as (H, W, 3) with
channels in [0, 1], Lab as (H, W, 3) planes (L nominally 0-100), masks as
(H, W) with values in {0, 1}. 8-bit quantization happens only at PNG I/O
(see :mod:`jndnet.imageio`).

Conversions use the D65 white point and the standard sRGB transfer
function. The white point is taken as the XYZ of sRGB white (1, 1, 1), so
white maps to exactly L=100, a=b=0 and round trips are exact up to float
precision.
"""

from __future__ import annotations

import numpy as np

# Linear sRGB -> XYZ under D65, IEC 61966-2-1 coefficients.
_RGB_TO_XYZ = np.array(
    [
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ]
)
_XYZ_TO_RGB = np.linalg.inv(_RGB_TO_XYZ)
# XYZ of sRGB white; using the row sums keeps the round trip exact.
_WHITE = _RGB_TO_XYZ.sum(axis=1)

_DELTA = 6.0 / 29.0
_DELTA3 = _DELTA**3


def validate_rgb(img: np.ndarray) -> np.ndarray:
    """Check an (H, W, 3) sRGB image with channels in [0, 1]."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3) RGB image, got shape {img.shape}")
    if img.size == 0:
        raise ValueError("empty image")
    if img.min() < 0.0 or img.max() > 1.0:
        raise ValueError("RGB channels must lie in [0, 1]")
    return img


def validate_mask(mask: np.ndarray, shape: tuple[int, int] | None = None) -> np.ndarray:
    """Check an (H, W) binary mask, optionally against an image shape."""
    mask = np.asarray(mask, dtype=np.float64)
    if mask.ndim != 2:
        raise ValueError(f"expected (H, W) mask, got shape {mask.shape}")
    if not np.all((mask == 0.0) | (mask == 1.0)):
        raise ValueError("mask values must be exactly 0 or 1")
    if shape is not None and mask.shape != tuple(shape):
        raise ValueError(f"mask shape {mask.shape} does not match image {shape}")
    return mask


def srgb_to_linear(c: np.ndarray) -> np.ndarray:
    """Inverse sRGB transfer function (gamma-encoded -> linear light)."""
    c = np.asarray(c, dtype=np.float64)
    return np.where(c <= 0.04045, c / 12.92, ((c + 0.055) / 1.055) ** 2.4)


def linear_to_srgb(c: np.ndarray) -> np.ndarray:
    """Forward sRGB transfer function (linear light -> gamma-encoded)."""
    c = np.asarray(c, dtype=np.float64)
    c = np.maximum(c, 0.0)
    return np.where(c <= 0.0031308, c * 12.92, 1.055 * c ** (1.0 / 2.4) - 0.055)


def srgb_to_lab(img: np.ndarray) -> np.ndarray:
    """Convert an (H, W, 3) sRGB image in [0, 1] to CIELAB (D65).

    Returns an (H, W, 3) array of (L, a, b) planes with L in [0, 100]
    for in-gamut input.
    """
    img = validate_rgb(img)
    xyz = srgb_to_linear(img) @ _RGB_TO_XYZ.T
    ratio = xyz / _WHITE
    f = np.where(ratio > _DELTA3, np.cbrt(ratio), ratio / (3 * _DELTA**2) + 4.0 / 29.0)
    fx, fy, fz = f[..., 0], f[..., 1], f[..., 2]
    return np.stack([116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)], axis=-1)


def lab_to_srgb(lab: np.ndarray) -> np.ndarray:
    """Convert an (H, W, 3) CIELAB image back to sRGB.

    Out-of-gamut results are clipped channel-wise to [0, 1].
    """
    lab = np.asarray(lab, dtype=np.float64)
    if lab.ndim != 3 or lab.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3) Lab image, got shape {lab.shape}")
    fy = (lab[..., 0] + 16.0) / 116.0
    fx = fy + lab[..., 1] / 500.0
    fz = fy - lab[..., 2] / 200.0
    f = np.stack([fx, fy, fz], axis=-1)
    ratio = np.where(f > _DELTA, f**3, 3 * _DELTA**2 * (f - 4.0 / 29.0))
    xyz = ratio * _WHITE
    rgb = linear_to_srgb(xyz @ _XYZ_TO_RGB.T)
    return np.clip(rgb, 0.0, 1.0)


def apply_exposure_shift(img: np.ndarray, mask: np.ndarray, x: float) -> np.ndarray:
    """Scale the luminance of the masked region by ``2**x`` stops.

    The luminance channel of the Lab representation is multiplied by
    ``2**x`` where the mask is 1 and left untouched elsewhere; L is
    clipped to [0, 100] before converting back to sRGB, where channels
    are clipped to [0, 1]. Pixels outside the mask only incur round-trip
    error (well below 1/255 per channel).
    """
    img = validate_rgb(img)
    mask = validate_mask(mask, img.shape[:2])
    if not np.isfinite(x):
        raise ValueError("exposure shift x must be finite")
    lab = srgb_to_lab(img)
    scaled = np.clip(lab[..., 0] * 2.0**x, 0.0, 100.0)
    lab[..., 0] = np.where(mask == 1.0, scaled, lab[..., 0])
    return lab_to_srgb(lab)


def standardize(img: np.ndarray, size: int | None = None) -> np.ndarray:
    """Zero-mean unit-variance rescaling, optionally resized to ``size``.

    Constant input maps to an all-zero tensor. Statistics are computed
    over every value of the (possibly resized) array.
    """
    arr = np.asarray(img, dtype=np.float64)
    if arr.size == 0:
        raise ValueError("empty image")
    if size is not None and arr.shape[:2] != (size, size):
        arr = resize_bilinear(arr, size, size)
    sd = arr.std()
    if sd < 1e-12:
        return np.zeros_like(arr)
    return (arr - arr.mean()) / sd


def resize_bilinear(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize of an (H, W) or (H, W, C) array, pixel-center aligned."""
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape[:2]
    if (h, w) == (out_h, out_w):
        return img.copy()
    ys = np.clip((np.arange(out_h) + 0.5) * (h / out_h) - 0.5, 0.0, h - 1.0)
    xs = np.clip((np.arange(out_w) + 0.5) * (w / out_w) - 0.5, 0.0, w - 1.0)
    y0 = np.floor(ys).astype(np.intp)
    x0 = np.floor(xs).astype(np.intp)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = (ys - y0)[:, None]
    wx = (xs - x0)[None, :]
    if img.ndim == 3:
        wy = wy[..., None]
        wx = wx[..., None]
    top = img[y0][:, x0] * (1 - wx) + img[y0][:, x1] * wx
    bot = img[y1][:, x0] * (1 - wx) + img[y1][:, x1] * wx
    return top * (1 - wy) + bot * wy


def resize_nearest(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Nearest-neighbour resize; preserves the input's value set (masks)."""
    img = np.asarray(img)
    h, w = img.shape[:2]
    if (h, w) == (out_h, out_w):
        return img.copy()
    ys = np.minimum(((np.arange(out_h) + 0.5) * (h / out_h)).astype(np.intp), h - 1)
    xs = np.minimum(((np.arange(out_w) + 0.5) * (w / out_w)).astype(np.intp), w - 1)
    return img[ys][:, xs].copy()
