"""Sample generation for the exposure-regression and classifier training.

Regression samples pair an original with a shifted image and regress the
per-pixel shift magnitude (``target = x * mask``). Classifier samples are
single shifted images labelled per pixel with one of three classes:

- 0: shift below the image's negative threshold (inside the mask)
- 1: shift above the positive threshold (inside the mask)
- 2: everything else (background, or subthreshold shifts)

Class-balanced batches draw the shift from per-class distributions: the
subthreshold class log-uniform between the thresholds, the suprathreshold
classes from exponentials concentrated just beyond their threshold.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import imageio
from .color import (
    apply_exposure_shift,
    resize_bilinear,
    resize_nearest,
    standardize,
    validate_mask,
    validate_rgb,
)
from .psychometric import ThresholdPair

# Shift support in stops: scale factors from 0.1x to 10x.
X_MIN = math.log2(0.1)
X_MAX = math.log2(10.0)

# Rate of the suprathreshold exponentials, per stop. Chosen so roughly 85%
# of the mass falls within one stop of the threshold.
CLASS_EXP_RATE = 2.0

MIN_MASK_AREA = 0.01


@dataclass(frozen=True)
class DatasetRecord:
    """One manifest entry: an image, its object mask, optional thresholds."""

    image_id: str
    image: np.ndarray
    mask: np.ndarray
    thresholds: ThresholdPair | None = None


@dataclass(frozen=True)
class LabeledSample:
    """Network-ready sample: standardized input and its target plane(s)."""

    input: np.ndarray  # (H, W, 3) classifier input or (H, W, 6) stacked pair
    target: np.ndarray  # (H, W, 3) one-hot classes or (H, W) shift magnitudes
    x: float
    image_id: str


def sample_x_aet(rng: np.random.Generator) -> float:
    """Shift for regression training: uniform in stops over the support."""
    return float(rng.uniform(X_MIN, X_MAX))


def _truncated_exp(rng, rate, width):
    # inverse-CDF draw from Exp(rate) truncated to (0, width); redraws the
    # measure-zero endpoints so samples stay strictly beyond the threshold
    if width <= 0.0:
        raise ValueError("threshold leaves no room inside the shift support")
    cap = 1.0 - math.exp(-rate * width)
    while True:
        e = -math.log1p(-rng.random() * cap) / rate
        if 0.0 < e < width:
            return e


def sample_x_class(c: int, thresholds: ThresholdPair, rng: np.random.Generator) -> float:
    """Shift conditioned on the target class for balanced batch generation."""
    neg, pos = thresholds.neg.mean, thresholds.pos.mean
    if c == 2:
        return float(rng.uniform(neg, pos))
    if c == 0:
        return float(neg - _truncated_exp(rng, CLASS_EXP_RATE, neg - X_MIN))
    if c == 1:
        return float(pos + _truncated_exp(rng, CLASS_EXP_RATE, X_MAX - pos))
    raise ValueError(f"invalid class id {c}")


def make_class_mask(mask: np.ndarray, x: float, thresholds: ThresholdPair) -> np.ndarray:
    """One-hot (H, W, 3) class target for a shift of ``x`` stops.

    Suprathreshold classes use strict inequalities; a shift exactly at a
    threshold stays in class 2.
    """
    mask = validate_mask(mask)
    cls = np.full(mask.shape, 2, dtype=np.intp)
    if x < thresholds.neg.mean:
        cls[mask == 1.0] = 0
    elif x > thresholds.pos.mean:
        cls[mask == 1.0] = 1
    return np.eye(3)[cls]


def make_aet_pair(
    img: np.ndarray,
    mask: np.ndarray,
    rng: np.random.Generator,
    input_size: int,
    x: float | None = None,
):
    """Regression sample: standardized (original, shifted) pair and target.

    Requires the mask to cover more than 1% of the image; the target is
    ``x`` inside the (resized) mask and 0 elsewhere.
    """
    img = validate_rgb(img)
    mask = validate_mask(mask, img.shape[:2])
    if mask.mean() <= MIN_MASK_AREA:
        raise ValueError("mask area must exceed 1% of the image")
    if x is None:
        x = sample_x_aet(rng)
    shifted = apply_exposure_shift(img, mask, x)
    pair = (standardize(img, input_size), standardize(shifted, input_size))
    target = x * resize_nearest(mask, input_size, input_size)
    return pair, target, float(x)


def make_ptc_batch(
    records: list[DatasetRecord],
    batch_size: int,
    rng: np.random.Generator,
    input_size: int,
) -> list[LabeledSample]:
    """Class-balanced classifier batch: per drawn image, one sample per class."""
    if batch_size % 3 != 0:
        raise ValueError(f"batch_size must be divisible by 3, got {batch_size}")
    if not records:
        raise ValueError("empty dataset")
    samples = []
    for _ in range(batch_size // 3):
        rec = records[int(rng.integers(len(records)))]
        if rec.thresholds is None:
            raise ValueError(f"record {rec.image_id} lacks thresholds")
        small_mask = resize_nearest(rec.mask, input_size, input_size)
        for c in (0, 1, 2):
            x = sample_x_class(c, rec.thresholds, rng)
            shifted = apply_exposure_shift(rec.image, rec.mask, x)
            samples.append(
                LabeledSample(
                    input=standardize(shifted, input_size),
                    target=make_class_mask(small_mask, x, rec.thresholds),
                    x=x,
                    image_id=rec.image_id,
                )
            )
    return samples


def augment(sample: LabeledSample, rng: np.random.Generator) -> LabeledSample:
    """Geometric augmentation: 50% flips and 50% scale-then-crop (1.1-1.5x).

    The same transform hits input and target; targets use nearest-neighbour
    interpolation so one-hot planes stay one-hot. No photometric changes.
    """
    inp, tgt = sample.input, sample.target
    if rng.random() < 0.5:
        inp, tgt = np.flip(inp, axis=1).copy(), np.flip(tgt, axis=1).copy()
    if rng.random() < 0.5:
        inp, tgt = np.flip(inp, axis=0).copy(), np.flip(tgt, axis=0).copy()
    if rng.random() < 0.5:
        factor = rng.uniform(1.1, 1.5)
        h, w = inp.shape[:2]
        nh, nw = int(round(h * factor)), int(round(w * factor))
        big_inp = resize_bilinear(inp, nh, nw)
        big_tgt = resize_nearest(tgt, nh, nw)
        oy = int(rng.integers(0, nh - h + 1))
        ox = int(rng.integers(0, nw - w + 1))
        inp = big_inp[oy : oy + h, ox : ox + w]
        tgt = big_tgt[oy : oy + h, ox : ox + w]
    return replace(sample, input=inp, target=tgt)


# --- synthetic scenes --------------------------------------------------------


def _smooth_noise(rng, size, cells):
    return resize_bilinear(rng.random((cells, cells)), size, size)


def _ellipse(rng, size):
    cy, cx = rng.uniform(0.3, 0.7, 2) * size
    ry, rx = rng.uniform(0.12, 0.35, 2) * size
    yy, xx = np.mgrid[0:size, 0:size]
    return ((((yy - cy) / ry) ** 2 + (((xx - cx) / rx) ** 2)) <= 1.0).astype(np.float64)


def _texture(rng, size):
    """One texture plane in [0, 1] from a randomly drawn family."""
    kind = int(rng.integers(0, 4))
    yy, xx = np.mgrid[0:size, 0:size] / size
    if kind == 0:  # multi-scale smooth noise
        cells = int(rng.integers(2, 7))
        return _smooth_noise(rng, size, cells)
    if kind == 1:  # oriented stripes
        angle = rng.uniform(0.0, np.pi)
        freq = rng.uniform(2.0, 7.0)
        phase = rng.uniform(0.0, 2 * np.pi)
        wave = np.sin(2 * np.pi * freq * (np.cos(angle) * xx + np.sin(angle) * yy) + phase)
        return 0.5 + 0.5 * wave
    if kind == 2:  # radial gradient
        cy, cx = rng.uniform(0.0, 1.0, 2)
        r = np.sqrt((yy - cy) ** 2 + (xx - cx) ** 2)
        return 1.0 - np.clip(r / rng.uniform(0.6, 1.4), 0.0, 1.0)
    coarse = _smooth_noise(rng, size, int(rng.integers(3, 8)))  # two-tone blobs
    return np.where(coarse > np.median(coarse), 0.75, 0.25) + rng.normal(0.0, 0.03, coarse.shape)


def _synthetic_scene(rng, size):
    # Textured colored background with an object region whose unshifted
    # brightness tracks the local background closely, so an unshifted object
    # reads as "matched" and any exposure shift as a local mismatch (narrow
    # tint keeps the zero-shift case unambiguous). Backgrounds and object
    # textures are drawn from several families so small labelled sets do not
    # cover the full scene distribution.
    base = rng.uniform(0.2, 0.75, 3)
    spread = rng.uniform(0.15, 0.35)
    bg = np.clip(
        base + spread * np.stack([_texture(rng, size) - 0.5 for _ in range(3)], axis=-1),
        0.05,
        0.95,
    )
    mask = np.zeros((size, size))
    for _ in range(30):
        mask = _ellipse(rng, size)
        if rng.random() < 0.4:  # blobbier shapes from a second lobe
            mask = np.maximum(mask, _ellipse(rng, size))
        if 0.03 < mask.mean() < 0.5:
            break
    tint = rng.uniform(0.97, 1.03, 3)
    tex_amp = rng.uniform(0.1, 0.3)
    tex = _texture(rng, size)
    local = bg.mean(axis=-1, keepdims=True)
    obj = (local + tex_amp * (tex[..., None] - 0.5)) * tint
    img = np.where(mask[..., None] == 1.0, obj, bg)
    img += rng.normal(0.0, 0.008, img.shape)  # sensor-style noise
    return np.clip(img, 0.0, 1.0), mask


def assign_synthetic_thresholds(img, mask, rng) -> ThresholdPair:
    """Content-dependent thresholds: brighter objects are easier to spoil.

    Magnitudes sit in the fraction-of-a-stop regime so classifiers have to
    calibrate to the per-image threshold rather than merely detect gross
    shifts.
    """
    lum = float(img[mask == 1.0].mean())
    pos = float(np.clip(0.15 + 0.9 * (0.7 - lum) + rng.normal(0.0, 0.02), 0.1, 0.9))
    neg = float(np.clip(0.2 + 0.9 * (0.7 - lum) + rng.normal(0.0, 0.02), 0.12, 1.0))
    return ThresholdPair.from_means(-neg, pos)


def make_synthetic_dataset(
    n_images: int, size: int = 32, seed: int = 0, with_thresholds: bool = True
) -> list[DatasetRecord]:
    """Procedural dataset of object-on-background scenes (deterministic)."""
    records = []
    for i in range(n_images):
        rng = np.random.default_rng([seed, 77, i])
        img, mask = _synthetic_scene(rng, size)
        thresholds = assign_synthetic_thresholds(img, mask, rng) if with_thresholds else None
        records.append(DatasetRecord(f"synth{i:04d}", img, mask, thresholds))
    return records


# --- manifest I/O -------------------------------------------------------------


def write_dataset(records: list[DatasetRecord], out_dir: str | Path) -> Path:
    """Write PNGs plus a JSONL manifest; returns the manifest path."""
    out_dir = Path(out_dir)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    (out_dir / "masks").mkdir(parents=True, exist_ok=True)
    manifest = out_dir / "manifest.jsonl"
    with open(manifest, "w", encoding="utf-8") as fh:
        for rec in records:
            img_rel = f"images/{rec.image_id}.png"
            mask_rel = f"masks/{rec.image_id}.png"
            imageio.write_image(out_dir / img_rel, rec.image)
            imageio.write_mask(out_dir / mask_rel, rec.mask)
            row = {
                "image_id": rec.image_id,
                "image": img_rel,
                "mask": mask_rel,
                "x_t_neg": None if rec.thresholds is None else rec.thresholds.neg.mean,
                "x_t_pos": None if rec.thresholds is None else rec.thresholds.pos.mean,
            }
            fh.write(json.dumps(row) + "\n")
    return manifest


def load_dataset(manifest_path: str | Path) -> list[DatasetRecord]:
    """Load a JSONL manifest; image/mask paths resolve against its folder."""
    manifest_path = Path(manifest_path)
    base = manifest_path.parent
    records = []
    with open(manifest_path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            row = json.loads(line)
            thresholds = None
            if row.get("x_t_neg") is not None and row.get("x_t_pos") is not None:
                thresholds = ThresholdPair.from_means(row["x_t_neg"], row["x_t_pos"])
            records.append(
                DatasetRecord(
                    image_id=row["image_id"],
                    image=imageio.read_image(base / row["image"]),
                    mask=imageio.read_mask(base / row["mask"]),
                    thresholds=thresholds,
                )
            )
    if not records:
        raise ValueError(f"empty manifest: {manifest_path}")
    return records
