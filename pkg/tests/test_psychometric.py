import math

import numpy as np
import pytest

from jndnet import psychometric as psy

# Frozen reference values from a 50-digit arbitrary-precision evaluation of
# the Weibull scale constant and performance function.
K_BETA35 = 0.90057847033868747826
EVAL_REF = 0.99980357155259430867  # gamma=.5 alpha=.75 beta=3.5 t=.25 x=.5
INV_REF = 0.31803010136896482097  # same params, y=0.9

P = psy.PsychometricParams


def default_params(beta=3.5, t=0.25):
    return P(gamma=0.5, alpha=0.75, beta=beta, t=t)


def random_params(rng):
    gamma = rng.uniform(0.0, 0.9)
    alpha = gamma + (1.0 - gamma) * rng.uniform(1e-4, 1.0 - 1e-4)
    beta = rng.uniform(0.5, 20.0)
    t = rng.uniform(0.01, 3.4)
    return P(gamma, alpha, beta, t)


class TestWeibullK:
    def test_beta_one_collapses_to_log_two(self):
        assert psy.weibull_k(default_params(beta=1.0)) == pytest.approx(math.log(2), abs=1e-15)

    def test_large_beta_limit_is_one(self):
        assert psy.weibull_k(default_params(beta=1e7)) == pytest.approx(1.0, abs=1e-6)

    def test_matches_high_precision_reference(self):
        assert psy.weibull_k(default_params(beta=3.5)) == pytest.approx(K_BETA35, abs=1e-14)

    def test_invalid_params_rejected(self):
        with pytest.raises(ValueError):
            P(gamma=0.8, alpha=0.75, beta=1.0, t=0.2)
        with pytest.raises(ValueError):
            P(gamma=0.5, alpha=0.75, beta=-1.0, t=0.2)
        with pytest.raises(ValueError):
            P(gamma=0.5, alpha=0.75, beta=1.0, t=0.0)


class TestWeibullEval:
    def test_chance_at_zero_stimulus(self):
        assert psy.weibull_eval(default_params(), 0.0) == 0.5

    def test_alpha_at_threshold_for_any_beta(self):
        rng = np.random.default_rng(11)
        for _ in range(200):
            p = random_params(rng)
            assert abs(psy.weibull_eval(p, p.t) - p.alpha) <= 1e-12

    def test_matches_high_precision_reference(self):
        assert psy.weibull_eval(default_params(), 0.5) == pytest.approx(EVAL_REF, abs=1e-14)

    def test_monotone_and_bounded(self):
        rng = np.random.default_rng(12)
        for _ in range(50):
            p = random_params(rng)
            xs = np.linspace(0.0, 5.0, 400)
            ys = psy.weibull_eval(p, xs)
            assert np.all(np.diff(ys) >= 0.0)
            assert ys.min() >= p.gamma - 1e-12  # 1-ulp float slack
            assert ys.max() <= 1.0  # open upper bound saturates in floats

    def test_negative_magnitude_rejected(self):
        with pytest.raises(ValueError):
            psy.weibull_eval(default_params(), -0.1)


class TestInverseThreshold:
    def test_alpha_maps_to_t(self):
        p = default_params()
        assert psy.inverse_threshold(p, p.alpha) == pytest.approx(p.t, abs=1e-12)

    def test_left_limit_goes_to_zero(self):
        p = default_params()
        assert psy.inverse_threshold(p, p.gamma + 1e-12) < 1e-3

    def test_matches_bisection_oracle(self):
        p = default_params()
        # independent bisection on the forward function
        lo, hi = 0.0, 10.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if psy.weibull_eval(p, mid) < 0.9:
                lo = mid
            else:
                hi = mid
        x = psy.inverse_threshold(p, 0.9)
        assert x == pytest.approx(0.5 * (lo + hi), abs=1e-10)
        assert x == pytest.approx(INV_REF, abs=1e-13)

    def test_round_trip_identity(self):
        rng = np.random.default_rng(13)
        for _ in range(50):
            p = random_params(rng)
            for y in np.linspace(p.gamma + 1e-6, 1.0 - 1e-6, 9):
                x = psy.inverse_threshold(p, float(y))
                assert psy.weibull_eval(p, x) == pytest.approx(y, abs=1e-8)

    def test_out_of_range_rejected(self):
        p = default_params()
        with pytest.raises(ValueError):
            psy.inverse_threshold(p, 0.5)
        with pytest.raises(ValueError):
            psy.inverse_threshold(p, 1.0)


def synth_trials(rng, params, xs):
    trials = []
    for x in xs:
        p = psy.weibull_eval(params, float(x))
        trials.append(psy.TrialRecord(x=float(x), correct=bool(rng.random() < p)))
    return trials


class TestFitWeibull:
    def test_recovers_threshold_from_200_trials(self):
        true = default_params(beta=3.5, t=0.3)
        errors = []
        for seed in range(50):
            rng = np.random.default_rng(seed)
            xs = rng.uniform(0.1, 0.8, size=200)
            fit = psy.fit_weibull(synth_trials(rng, true, xs))
            errors.append(abs(fit.t - true.t))
        assert np.mean(errors) <= 0.10 * true.t

    def test_recovers_threshold_from_20_trials(self):
        true = default_params(beta=3.5, t=0.3)
        errors = []
        for seed in range(60):
            rng = np.random.default_rng(1000 + seed)
            xs = rng.uniform(0.1, 0.9, size=20)
            try:
                fit = psy.fit_weibull(synth_trials(rng, true, xs))
            except psy.FitError:
                continue
            errors.append(abs(fit.t - true.t))
        assert len(errors) >= 50
        assert np.mean(errors) <= 0.25 * true.t

    def test_exact_proportion_fixed_point(self):
        # Construct two stimulus levels whose empirical proportions exactly
        # match the Weibull for some (t, beta); the MLE must recover them.
        gamma, alpha = 0.5, 0.75
        xa, xb = 0.2, 0.5
        pa, pb = 0.6, 0.9
        qa = -math.log((1 - pa) / (1 - gamma))
        qb = -math.log((1 - pb) / (1 - gamma))
        beta = math.log(qa / qb) / math.log(xa / xb)
        k = (-math.log((1 - alpha) / (1 - gamma))) ** (1 / beta)
        t = k * xa / qa ** (1 / beta)
        trials = []
        trials += [psy.TrialRecord(xa, True)] * 6 + [psy.TrialRecord(xa, False)] * 4
        trials += [psy.TrialRecord(xb, True)] * 9 + [psy.TrialRecord(xb, False)] * 1
        fit = psy.fit_weibull(trials, gamma, alpha)
        assert fit.t == pytest.approx(t, rel=1e-3)
        assert fit.beta == pytest.approx(beta, rel=1e-2)

    def test_likelihood_at_fit_beats_generator(self):
        true = default_params(beta=3.0, t=0.4)
        rng = np.random.default_rng(21)
        xs = rng.uniform(0.05, 1.5, size=120)
        trials = synth_trials(rng, true, xs)
        fit = psy.fit_weibull(trials)

        def ll(params):
            xs_ = np.array([abs(t.x) for t in trials])
            ys = np.array([1.0 if t.correct else 0.0 for t in trials])
            p = np.clip(psy.weibull_eval(params, xs_), 1e-12, 1 - 1e-12)
            return np.sum(ys * np.log(p) + (1 - ys) * np.log(1 - p))

        assert ll(fit) >= ll(true) - 1e-9

    def test_degenerate_data_rejected(self):
        all_correct = [psy.TrialRecord(0.2, True), psy.TrialRecord(0.4, True)]
        with pytest.raises(psy.FitError):
            psy.fit_weibull(all_correct)
        with pytest.raises(psy.FitError):
            psy.fit_weibull([psy.TrialRecord(0.2, False), psy.TrialRecord(0.4, False)])
        with pytest.raises(psy.FitError):
            psy.fit_weibull([psy.TrialRecord(0.2, True)])
        mixed_sign = [psy.TrialRecord(-0.2, True), psy.TrialRecord(0.4, False)]
        with pytest.raises(psy.FitError):
            psy.fit_weibull(mixed_sign)


class TestBootstrapMean:
    def test_degenerate_distribution(self):
        est = psy.bootstrap_mean([0.3, 0.3, 0.3], n_bootstrap=500, seed=0)
        assert est.mean == pytest.approx(0.3)
        assert est.ci_high - est.ci_low <= 1e-12

    def test_single_value_single_sample(self):
        est = psy.bootstrap_mean([-0.4], n_bootstrap=1, seed=5)
        assert est.mean == -0.4
        assert est.ci_low == est.ci_high == -0.4

    def test_mean_close_to_sample_mean(self):
        values = [-0.1, -0.2, -0.3]
        est = psy.bootstrap_mean(values, n_bootstrap=1000, seed=42)
        se = np.std(values) / math.sqrt(len(values))
        assert abs(est.mean - (-0.2)) <= 3 * se
        assert est.ci_low <= est.mean <= est.ci_high

    def test_bit_reproducible(self):
        values = [-0.15, -0.22, -0.31, -0.18]
        a = psy.bootstrap_mean(values, 1000, seed=7)
        b = psy.bootstrap_mean(values, 1000, seed=7)
        assert a == b

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            psy.bootstrap_mean([], 10, seed=0)


class TestRemoveOutliers:
    def test_all_equal_unchanged(self):
        assert psy.remove_outliers([0.2, 0.2, 0.2], 3.0) == [0.2, 0.2, 0.2]

    def test_hand_computed_inclusion(self):
        # mean=20, population sd=40: everything within 3 sd, nothing dropped
        values = [0.0, 0.0, 0.0, 0.0, 100.0]
        assert psy.remove_outliers(values, 3.0) == values

    def test_extreme_value_dropped(self):
        values = [0.0] * 20 + [100.0]
        kept = psy.remove_outliers(values, 3.0)
        assert kept == [0.0] * 20

    def test_never_empty(self):
        assert psy.remove_outliers([1.0, 5.0], k_sd=0.0) != []


class TestSimulatedObserver:
    def test_uses_direction_specific_function(self):
        obs = psy.SimulatedObserver(
            neg=default_params(t=0.3), pos=default_params(t=0.6), seed=3
        )
        assert obs.p_correct(-0.3) == pytest.approx(0.75)
        assert obs.p_correct(0.6) == pytest.approx(0.75)

    def test_empirical_rate_matches_function(self):
        obs = psy.SimulatedObserver(
            neg=default_params(t=0.3), pos=default_params(t=0.3), seed=9
        )
        hits = sum(obs.respond(0.3) for _ in range(4000))
        assert hits / 4000 == pytest.approx(0.75, abs=0.03)


class TestTrialLogIo:
    def test_round_trip(self, tmp_path):
        rows = [
            {"observer_id": "o1", "image_id": "img7", "direction": -1,
             "x": -0.31, "correct": True, "timestamp": 12.5},
            {"observer_id": "o1", "image_id": "img7", "direction": 1,
             "x": 0.22, "correct": False, "timestamp": 13.1},
        ]
        path = tmp_path / "trials.jsonl"
        psy.write_trial_log(path, rows)
        assert psy.read_trial_log(path) == rows

    def test_threshold_table(self, tmp_path):
        pair = psy.ThresholdPair.from_means(-0.25, 0.23)
        path = tmp_path / "thresholds.csv"
        psy.write_threshold_table(path, {"img1": pair})
        text = path.read_text()
        assert "image_id" in text and "img1" in text
