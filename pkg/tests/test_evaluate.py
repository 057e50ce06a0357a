import numpy as np
import pytest

from jndnet import evaluate as ev
from jndnet.color import apply_exposure_shift, resize_nearest, standardize
from jndnet.datagen import make_class_mask, make_synthetic_dataset
from jndnet.models import BackboneConfig

SIZE = 16


class OracleClassifier:
    """Outputs the exact ground-truth class mask for any sweep input.

    Sweep inputs are standardized shifted images on the grid; the oracle
    matches each batch row against precomputed inputs for every (record,
    grid point) pair and returns that pair's true class mask.
    """

    def __init__(self, records, grid=ev.SweepGrid(), input_size=SIZE):
        self.config = BackboneConfig(
            input_size=input_size, encoder_blocks=1, base_channels=4,
            multiscale_channels=4, convs_per_block=1,
        )
        inputs, targets = [], []
        for rec in records:
            small = resize_nearest(rec.mask, input_size, input_size)
            for x in grid.points():
                inputs.append(
                    standardize(apply_exposure_shift(rec.image, rec.mask, float(x)), input_size)
                )
                targets.append(make_class_mask(small, float(x), rec.thresholds))
        self.inputs = np.stack(inputs).astype(np.float32)
        self.targets = np.stack(targets).astype(np.float32)

    def predict(self, batch):
        out = []
        for row in batch:
            idx = int(np.argmin(((self.inputs - row) ** 2).sum(axis=(1, 2, 3))))
            out.append(self.targets[idx])
        return np.stack(out)


class AllBackgroundModel:
    """Predicts 'no suprathreshold shift' everywhere with full confidence."""

    def __init__(self, input_size=SIZE):
        self.config = BackboneConfig(
            input_size=input_size, encoder_blocks=1, base_channels=4,
            multiscale_channels=4, convs_per_block=1,
        )

    def predict(self, batch):
        probs = np.zeros(batch.shape[:3] + (3,), dtype=np.float32)
        probs[..., 2] = 1.0
        return probs


@pytest.fixture(scope="module")
def records():
    return make_synthetic_dataset(6, size=SIZE, seed=11)


@pytest.fixture(scope="module")
def oracle(records):
    return OracleClassifier(records)


class TestSoftF1:
    def test_perfect_hard_prediction(self):
        target = np.eye(3)[np.random.default_rng(0).integers(0, 3, (5, 5))]
        assert ev.soft_f1(target.copy(), target, 0) in (0.0, 1.0)  # 0 only if class absent
        target[..., :] = 0.0
        target[..., 1] = 1.0
        assert ev.soft_f1(target.copy(), target, 1) == 1.0

    def test_uniform_prediction_on_absent_class_is_zero(self):
        target = np.zeros((4, 4, 3))
        target[..., 2] = 1.0  # no class-0 pixels
        pred = np.full((4, 4, 3), 1.0 / 3.0)
        assert ev.soft_f1(pred, target, 0) == pytest.approx(
            2 * 0.0 / (2 * 0.0 + (1 / 3) * 16 + 0.0)
        )

    def test_all_wrong_is_zero(self):
        target = np.zeros((3, 3, 3))
        target[..., 0] = 1.0
        pred = np.zeros((3, 3, 3))
        pred[..., 1] = 1.0
        assert ev.soft_f1(pred, target, 0) == 0.0

    def test_equals_hard_f1_for_one_hot_predictions(self):
        rng = np.random.default_rng(1)
        pred = np.eye(3)[rng.integers(0, 3, (8, 8))]
        target = np.eye(3)[rng.integers(0, 3, (8, 8))]
        for c in range(3):
            p, y = pred[..., c], target[..., c]
            tp = np.sum((p == 1) & (y == 1))
            fp = np.sum((p == 1) & (y == 0))
            fn = np.sum((p == 0) & (y == 1))
            hard = 2 * tp / (2 * tp + fp + fn) if (2 * tp + fp + fn) else 0.0
            assert ev.soft_f1(pred, target, c) == pytest.approx(hard)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            ev.soft_f1(np.zeros((2, 2, 3)), np.zeros((3, 3, 3)), 0)


class TestMeanIou:
    def test_perfect_prediction(self):
        target = np.eye(3)[np.random.default_rng(2).integers(0, 3, (6, 6))]
        assert ev.mean_iou(target.copy(), target) == 1.0

    def test_disjoint_predictions_score_zero(self):
        pred = np.zeros((4, 4, 3))
        pred[..., 0] = 1.0
        target = np.zeros((4, 4, 3))
        target[..., 1] = 1.0
        assert ev.mean_iou(pred, target) == 0.0

    def test_checker_pattern_hand_computed(self):
        # prediction alternates class 0 and 1, target is all class 0:
        # IoU(class0)=8/16, IoU(class1)=0/8, class 2 absent -> skipped
        pred = np.zeros((4, 4, 3))
        checker = (np.indices((4, 4)).sum(axis=0) % 2).astype(bool)
        pred[~checker, 0] = 1.0
        pred[checker, 1] = 1.0
        target = np.zeros((4, 4, 3))
        target[..., 0] = 1.0
        assert ev.mean_iou(pred, target) == pytest.approx((0.5 + 0.0) / 2)

    def test_absent_classes_skipped(self):
        pred = np.zeros((2, 2, 3))
        pred[..., 2] = 1.0
        target = pred.copy()
        assert ev.mean_iou(pred, target) == 1.0


class TestSweepGrid:
    def test_symmetric_with_zero_on_grid(self):
        xs = ev.SweepGrid().points()
        assert len(xs) == 67
        assert xs[33] == pytest.approx(0.0, abs=1e-12)
        assert np.allclose(xs, -xs[::-1])
        assert np.all(np.diff(xs) > 0)


class TestBoundarySweep:
    def test_oracle_recovers_thresholds_within_one_step(self, records, oracle):
        step = (ev.X_MAX - ev.X_MIN) / 66
        for rec in records:
            sweep = ev.boundary_sweep(oracle, rec.image, rec.mask, rec.thresholds)
            assert sweep.boundary_neg is not None and sweep.boundary_pos is not None
            assert abs(sweep.boundary_neg - rec.thresholds.neg.mean) <= step + 1e-9
            assert abs(sweep.boundary_pos - rec.thresholds.pos.mean) <= step + 1e-9

    def test_background_only_model_never_crosses(self, records):
        model = AllBackgroundModel()
        rec = records[0]
        sweep = ev.boundary_sweep(model, rec.image, rec.mask, rec.thresholds)
        assert sweep.boundary_neg is None and sweep.boundary_pos is None
        assert np.all(sweep.f1_neg == 0.0) and np.all(sweep.f1_pos == 0.0)

    def test_oracle_f1_monotone_beyond_threshold(self, records, oracle):
        rec = records[0]
        sweep = ev.boundary_sweep(oracle, rec.image, rec.mask, rec.thresholds)
        below = sweep.xs < rec.thresholds.neg.mean
        # walking further negative never decreases the negative-class score
        f1_desc = sweep.f1_neg[below][::-1]
        assert np.all(np.diff(f1_desc) >= -1e-12)

    def test_deterministic(self, records, oracle):
        rec = records[1]
        a = ev.boundary_sweep(oracle, rec.image, rec.mask, rec.thresholds)
        b = ev.boundary_sweep(oracle, rec.image, rec.mask, rec.thresholds)
        assert np.array_equal(a.f1_neg, b.f1_neg)
        assert np.array_equal(a.f1_pos, b.f1_pos)
        assert a.boundary_neg == b.boundary_neg

    def test_partial_grid_rejected(self, records, oracle):
        rec = records[0]
        with pytest.raises(ValueError):
            ev.boundary_sweep(oracle, rec.image, rec.mask, rec.thresholds,
                              grid=ev.SweepGrid(lo=-1.0, hi=1.0))


class TestEvaluateModel:
    def test_oracle_report_near_zero_error(self, records, oracle):
        report = ev.evaluate_model(oracle, list(records))
        step = (ev.X_MAX - ev.X_MIN) / 66
        assert report.mse_both <= step**2
        assert len(report.entries) == len(records)

    def test_missing_boundaries_clamped_to_edges(self, records):
        report = ev.evaluate_model(AllBackgroundModel(), list(records))
        for entry in report.entries:
            assert entry.pred_neg == pytest.approx(ev.X_MIN)
            assert entry.pred_pos == pytest.approx(ev.X_MAX)
        assert report.mse_both > 1.0  # gross misses score as large errors

    def test_aggregate_equals_recomputation(self, records, oracle):
        report = ev.evaluate_model(oracle, list(records))
        errs = [e.sq_err_neg for e in report.entries] + [e.sq_err_pos for e in report.entries]
        assert report.mse_both == pytest.approx(float(np.mean(errs)))
        assert report.mse_neg == pytest.approx(
            float(np.mean([e.sq_err_neg for e in report.entries]))
        )


class TestCrossValidation:
    def test_fold_sizes_differ_by_at_most_one(self):
        for n, k in [(200, 5), (23, 5), (10, 3)]:
            folds = ev.fold_indices(n, k, seed=0)
            sizes = [len(f) for f in folds]
            assert max(sizes) - min(sizes) <= 1
            assert sorted(i for fold in folds for i in fold) == list(range(n))

    def test_fold_assignment_deterministic(self):
        assert ev.fold_indices(50, 5, seed=3) == ev.fold_indices(50, 5, seed=3)
        assert ev.fold_indices(50, 5, seed=3) != ev.fold_indices(50, 5, seed=4)

    def test_too_small_dataset_rejected(self):
        with pytest.raises(ValueError):
            ev.fold_indices(3, 5, seed=0)
        with pytest.raises(ValueError):
            ev.fold_indices(10, 1, seed=0)

    def test_cross_validate_with_oracle_trainer(self, records):
        oracle = OracleClassifier(records)
        report = ev.cross_validate(
            list(records), k=3, train_fn=lambda train, fold: oracle, seed=0
        )
        assert len(report.folds) == 3
        step = (ev.X_MAX - ev.X_MIN) / 66
        assert report.mse_both <= step**2
        d = report.to_dict()
        assert {"mse_both", "mse_neg", "mse_pos", "mean_iou", "folds"} <= set(d)

    def test_freeze_stage_report_structure(self, records):
        oracle = OracleClassifier(records)
        rows = ev.freeze_stage_report(
            list(records), ["none", "concatenate"], k=3, aet_model=None,
            train_fn=lambda train, fold: oracle, seed=0,
        )
        assert [r["freeze_up_to"] for r in rows] == ["none", "concatenate"]
        for row in rows:
            assert {"freeze_up_to", "mse_both", "mse_neg", "mse_pos"} <= set(row)
