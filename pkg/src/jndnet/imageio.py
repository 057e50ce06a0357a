"""8-bit PNG input/output for images and binary masks."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image


def read_image(path: str | Path) -> np.ndarray:
    """Read an 8-bit RGB PNG into an (H, W, 3) float array in [0, 1]."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float64)
    return arr / 255.0


def write_image(path: str | Path, img: np.ndarray) -> None:
    """Write an (H, W, 3) float image in [0, 1] as an 8-bit RGB PNG."""
    arr = np.asarray(img, dtype=np.float64)
    data = np.round(np.clip(arr, 0.0, 1.0) * 255.0).astype(np.uint8)
    Image.fromarray(data, mode="RGB").save(path, format="PNG")


def read_mask(path: str | Path) -> np.ndarray:
    """Read an 8-bit grayscale PNG as a binary mask (nonzero -> 1)."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("L"))
    return (arr > 0).astype(np.float64)


def write_mask(path: str | Path, mask: np.ndarray) -> None:
    """Write a binary (H, W) mask as an 8-bit grayscale PNG (1 -> 255)."""
    arr = np.asarray(mask)
    data = np.where(arr > 0, 255, 0).astype(np.uint8)
    Image.fromarray(data, mode="L").save(path, format="PNG")
