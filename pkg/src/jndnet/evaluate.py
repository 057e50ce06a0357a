"""Decision-boundary recovery and the cross-validation harness.

The classifier's implicit thresholds are found by sweeping the exposure
shift over its full support, scoring the suprathreshold classes with a
soft F1 against ground truth at each level, and reading off where the
score first crosses a criterion (0.1 by default) on either side of zero.
Recovered boundaries are compared against empirical thresholds as mean
squared errors in stops, per direction and pooled.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .color import apply_exposure_shift, resize_nearest, standardize
from .datagen import X_MAX, X_MIN, DatasetRecord, make_ptc_batch
from .models import BackboneConfig, PtcModel, TrainConfig, build_ptc_from_aet, train_ptc

F1_CRITERION = 0.1


@dataclass(frozen=True)
class SweepGrid:
    lo: float = X_MIN
    hi: float = X_MAX
    n: int = 67  # odd: symmetric around zero with zero on-grid

    def points(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.n)


@dataclass
class SweepResult:
    xs: np.ndarray
    f1_neg: np.ndarray
    f1_pos: np.ndarray
    boundary_neg: float | None
    boundary_pos: float | None


@dataclass
class ImageEval:
    image_id: str
    pred_neg: float
    pred_pos: float
    true_neg: float
    true_pos: float

    @property
    def sq_err_neg(self) -> float:
        return (self.pred_neg - self.true_neg) ** 2

    @property
    def sq_err_pos(self) -> float:
        return (self.pred_pos - self.true_pos) ** 2


@dataclass
class EvalReport:
    entries: list[ImageEval] = field(default_factory=list)
    mean_iou: float = float("nan")

    @property
    def mse_neg(self) -> float:
        return float(np.mean([e.sq_err_neg for e in self.entries]))

    @property
    def mse_pos(self) -> float:
        return float(np.mean([e.sq_err_pos for e in self.entries]))

    @property
    def mse_both(self) -> float:
        errs = [e.sq_err_neg for e in self.entries] + [e.sq_err_pos for e in self.entries]
        return float(np.mean(errs))

    def to_dict(self) -> dict:
        return {
            "mse_both": self.mse_both,
            "mse_neg": self.mse_neg,
            "mse_pos": self.mse_pos,
            "mean_iou": self.mean_iou,
            "images": [
                {
                    "image_id": e.image_id,
                    "pred_neg": e.pred_neg,
                    "pred_pos": e.pred_pos,
                    "true_neg": e.true_neg,
                    "true_pos": e.true_pos,
                }
                for e in self.entries
            ],
        }


def soft_f1(pred_probs: np.ndarray, target: np.ndarray, class_id: int) -> float:
    """F1 from probabilistic counts for one class channel.

    ``TP = sum(p*y)``, ``FP = sum(p*(1-y))``, ``FN = sum((1-p)*y)``;
    returns 0 when the denominator vanishes.
    """
    if pred_probs.shape != target.shape:
        raise ValueError(f"shape mismatch: {pred_probs.shape} vs {target.shape}")
    p = pred_probs[..., class_id].astype(np.float64)
    y = target[..., class_id].astype(np.float64)
    tp = float((p * y).sum())
    fp = float((p * (1.0 - y)).sum())
    fn = float(((1.0 - p) * y).sum())
    denom = 2.0 * tp + fp + fn
    if denom == 0.0:
        return 0.0
    return 2.0 * tp / denom


def mean_iou(pred: np.ndarray, target: np.ndarray) -> float:
    """Mean class IoU on argmax-hardened predictions.

    Classes absent from both prediction and target are skipped.
    """
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {target.shape}")
    p = pred.argmax(axis=-1)
    t = target.argmax(axis=-1)
    ious = []
    for c in range(pred.shape[-1]):
        pc, tc = p == c, t == c
        union = np.logical_or(pc, tc).sum()
        if union == 0:
            continue
        ious.append(np.logical_and(pc, tc).sum() / union)
    return float(np.mean(ious)) if ious else 1.0


def boundary_sweep(
    model,
    img: np.ndarray,
    mask: np.ndarray,
    thresholds,
    grid: SweepGrid = SweepGrid(),
    criterion: float = F1_CRITERION,
    input_size: int | None = None,
    chunk: int = 16,
) -> SweepResult:
    """Recover the model's decision boundaries for one image.

    At every grid shift the image is transformed, classified, and each
    suprathreshold class scored with a soft F1 against the transformed
    region: for a shift of x the class compatible with sign(x) should
    cover the object mask and nothing else, so the F1-versus-x curve
    rises where the model starts flagging the shift as suprathreshold.
    The negative boundary is the largest (closest to zero) negative shift
    with ``f1 >= criterion``; positive likewise on the other side.
    ``None`` when never crossed; zero is not searched. ``model`` only
    needs a ``predict(batch) -> probs`` method.
    """
    if not (grid.lo <= X_MIN + 1e-9 and grid.hi >= X_MAX - 1e-9):
        raise ValueError("sweep grid must cover the full shift support")
    size = input_size or model.config.input_size
    xs = grid.points()
    small_mask = resize_nearest(mask, size, size)
    inputs = np.stack(
        [standardize(apply_exposure_shift(img, mask, float(x)), size) for x in xs]
    ).astype(np.float32)
    target_neg = np.zeros((size, size, 3))
    target_neg[..., 0] = small_mask
    target_neg[..., 2] = 1.0 - small_mask
    target_pos = np.zeros((size, size, 3))
    target_pos[..., 1] = small_mask
    target_pos[..., 2] = 1.0 - small_mask
    probs = np.concatenate(
        [model.predict(inputs[i : i + chunk]) for i in range(0, len(xs), chunk)]
    )
    f1_neg = np.array([soft_f1(probs[i], target_neg, 0) for i in range(len(xs))])
    f1_pos = np.array([soft_f1(probs[i], target_pos, 1) for i in range(len(xs))])

    boundary_neg = None
    for i in range(len(xs)):
        if xs[i] < 0.0 and f1_neg[i] >= criterion:
            boundary_neg = float(xs[i])  # last hit below zero = closest to zero
    boundary_pos = None
    for i in range(len(xs)):
        if xs[i] > 0.0 and f1_pos[i] >= criterion:
            boundary_pos = float(xs[i])
            break
    return SweepResult(xs, f1_neg, f1_pos, boundary_neg, boundary_pos)


def evaluate_model(
    model,
    records: list[DatasetRecord],
    grid: SweepGrid = SweepGrid(),
    criterion: float = F1_CRITERION,
    input_size: int | None = None,
    iou_seed: int = 0,
) -> EvalReport:
    """Sweep every record and score recovered boundaries against truth.

    Missing boundaries are clamped to the sweep edge (the model never
    detects the transformation, maximally wrong in stops).
    """
    report = EvalReport()
    size = input_size or model.config.input_size
    rng = np.random.default_rng([iou_seed, 31])
    ious = []
    for rec in records:
        if rec.thresholds is None:
            raise ValueError(f"record {rec.image_id} lacks thresholds")
        sweep = boundary_sweep(
            model, rec.image, rec.mask, rec.thresholds, grid, criterion, input_size=size
        )
        pred_neg = sweep.boundary_neg if sweep.boundary_neg is not None else grid.lo
        pred_pos = sweep.boundary_pos if sweep.boundary_pos is not None else grid.hi
        report.entries.append(
            ImageEval(
                image_id=rec.image_id,
                pred_neg=pred_neg,
                pred_pos=pred_pos,
                true_neg=rec.thresholds.neg.mean,
                true_pos=rec.thresholds.pos.mean,
            )
        )
        samples = make_ptc_batch([rec], 3, rng, size)
        xs = np.stack([s.input for s in samples]).astype(np.float32)
        ts = np.stack([s.target for s in samples]).astype(np.float32)
        probs = model.predict(xs)
        ious.extend(mean_iou(p, t) for p, t in zip(probs, ts))
    report.mean_iou = float(np.mean(ious)) if ious else float("nan")
    return report


@dataclass
class CrossValReport:
    folds: list[EvalReport]

    @property
    def mse_both(self) -> float:
        return float(np.mean([f.mse_both for f in self.folds]))

    @property
    def mse_neg(self) -> float:
        return float(np.mean([f.mse_neg for f in self.folds]))

    @property
    def mse_pos(self) -> float:
        return float(np.mean([f.mse_pos for f in self.folds]))

    @property
    def mean_iou(self) -> float:
        return float(np.mean([f.mean_iou for f in self.folds]))

    def to_dict(self) -> dict:
        return {
            "mse_both": self.mse_both,
            "mse_neg": self.mse_neg,
            "mse_pos": self.mse_pos,
            "mean_iou": self.mean_iou,
            "folds": [f.to_dict() for f in self.folds],
        }


def fold_indices(n: int, k: int, seed: int) -> list[list[int]]:
    """Deterministic fold assignment; fold sizes differ by at most one."""
    if k < 2:
        raise ValueError("need at least two folds")
    if n < k:
        raise ValueError(f"dataset of {n} records cannot fill {k} folds")
    order = np.random.default_rng([seed, 41]).permutation(n)
    return [[int(i) for i in order[f::k]] for f in range(k)]


def cross_validate(
    records: list[DatasetRecord],
    k: int,
    freeze_stage: str = "none",
    aet_model=None,
    config: BackboneConfig | None = None,
    train_config: TrainConfig | None = None,
    seed: int = 0,
    grid: SweepGrid = SweepGrid(),
    criterion: float = F1_CRITERION,
    train_fn=None,
) -> CrossValReport:
    """K-fold harness: train a classifier per fold, sweep the held-out images.

    With ``aet_model`` the per-fold classifier starts from the pretrained
    backbone (frozen up to ``freeze_stage``); otherwise it trains from
    random initialization. ``train_fn(train_records, fold) -> model``
    overrides training entirely (evaluation mechanics stay the same).
    """
    folds = fold_indices(len(records), k, seed)
    tc = train_config or TrainConfig()
    reports = []
    for fold, val_idx in enumerate(folds):
        val = [records[i] for i in val_idx]
        train = [records[i] for i in range(len(records)) if i not in set(val_idx)]
        if train_fn is not None:
            model = train_fn(train, fold)
        else:
            fold_tc = TrainConfig(**{**tc.__dict__, "seed": tc.seed + 1000 * fold})
            if aet_model is not None:
                model = build_ptc_from_aet(aet_model, freeze_stage, seed=fold_tc.seed)
            else:
                if config is None:
                    raise ValueError("config required when training from scratch")
                model = PtcModel(config, seed=fold_tc.seed)
                model.backbone.freeze(freeze_stage)
            model, _ = train_ptc(model, train, fold_tc)
        reports.append(
            evaluate_model(model, val, grid, criterion, iou_seed=seed + fold)
        )
    return CrossValReport(reports)


def freeze_stage_report(
    records: list[DatasetRecord],
    stages: list[str],
    k: int,
    aet_model,
    train_config: TrainConfig | None = None,
    seed: int = 0,
    train_fn=None,
) -> list[dict]:
    """One cross-validated row per freeze stage (threshold MSEs in stops^2)."""
    rows = []
    for stage in stages:
        report = cross_validate(
            records,
            k,
            freeze_stage=stage,
            aet_model=aet_model,
            train_config=train_config,
            seed=seed,
            train_fn=train_fn,
        )
        rows.append(
            {
                "freeze_up_to": stage,
                "mse_both": report.mse_both,
                "mse_neg": report.mse_neg,
                "mse_pos": report.mse_pos,
            }
        )
    return rows
