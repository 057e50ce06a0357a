"""Weibull psychometric model for 2AFC detection data.

Provides the Weibull performance function, maximum-likelihood fitting of
binary trial responses, bootstrap pooling of thresholds across observers,
outlier removal, and a simulated observer for driving experiments without
humans. Magnitudes are expressed in exposure stops; fitting operates on
unsigned magnitudes and the caller reattaches the direction's sign.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np
from scipy import optimize

# Search region for the MLE, in stop units.
T_BOUNDS = (0.01, 3.4)
BETA_BOUNDS = (0.5, 20.0)

_P_FLOOR = 1e-12


class FitError(ValueError):
    """Raised when an observer-image trial set cannot support a fit."""


@dataclass(frozen=True)
class PsychometricParams:
    """Weibull parameters: guess rate, threshold criterion, slope, threshold."""

    gamma: float
    alpha: float
    beta: float
    t: float

    def __post_init__(self):
        if not 0.0 <= self.gamma < self.alpha < 1.0:
            raise ValueError(f"need 0 <= gamma < alpha < 1, got {self.gamma}, {self.alpha}")
        if self.beta <= 0.0:
            raise ValueError(f"slope must be positive, got {self.beta}")
        if self.t <= 0.0:
            raise ValueError(f"threshold must be positive, got {self.t}")


@dataclass(frozen=True)
class TrialRecord:
    """One 2AFC trial: signed stimulus magnitude and response correctness."""

    x: float
    correct: bool
    response_time: float | None = None

    def __post_init__(self):
        if not np.isfinite(self.x):
            raise ValueError("stimulus magnitude must be finite")


@dataclass(frozen=True)
class ThresholdEstimate:
    """Bootstrapped mean threshold with 2.5/97.5 percentile bounds."""

    mean: float
    ci_low: float
    ci_high: float
    n_observers: int
    n_bootstrap: int

    def __post_init__(self):
        if not self.ci_low <= self.mean <= self.ci_high:
            raise ValueError("CI must bracket the mean")
        if self.n_bootstrap < 1:
            raise ValueError("need at least one bootstrap sample")


@dataclass(frozen=True)
class ThresholdPair:
    """Per-image empirical thresholds for negative and positive shifts."""

    neg: ThresholdEstimate
    pos: ThresholdEstimate

    def __post_init__(self):
        if not self.neg.mean < 0.0 < self.pos.mean:
            raise ValueError("expected neg.mean < 0 < pos.mean")

    @classmethod
    def from_means(cls, neg: float, pos: float) -> "ThresholdPair":
        """Build a pair from bare means (e.g. a dataset manifest row)."""
        return cls(
            neg=ThresholdEstimate(neg, neg, neg, 0, 1),
            pos=ThresholdEstimate(pos, pos, pos, 0, 1),
        )


def weibull_k(params: PsychometricParams) -> float:
    """Scale constant making the function hit ``alpha`` exactly at ``x=t``.

    ``k = (-ln((1-alpha)/(1-gamma)))**(1/beta)`` with the natural log; this
    is the only base for which ``weibull_eval(params, t) == alpha`` given
    the e-exponential in the performance function.
    """
    return float((-np.log((1.0 - params.alpha) / (1.0 - params.gamma))) ** (1.0 / params.beta))


def weibull_eval(params: PsychometricParams, x) -> np.ndarray | float:
    """Probability of a correct response at unsigned magnitude ``x``.

    ``y = 1 - (1-gamma) * exp(-(k*x/t)**beta)``; accepts scalars or arrays.
    """
    x = np.asarray(x, dtype=np.float64)
    if np.any(x < 0.0):
        raise ValueError("magnitude must be >= 0 (take |x| for signed stimuli)")
    k = weibull_k(params)
    y = 1.0 - (1.0 - params.gamma) * np.exp(-((k * x / params.t) ** params.beta))
    return float(y) if y.ndim == 0 else y


def inverse_threshold(params: PsychometricParams, y: float) -> float:
    """Magnitude at which the function reaches performance level ``y``."""
    if not params.gamma < y < 1.0:
        raise ValueError(f"y must lie in (gamma, 1), got {y}")
    k = weibull_k(params)
    q = -np.log((1.0 - y) / (1.0 - params.gamma))
    return float(params.t / k * q ** (1.0 / params.beta))


def _neg_log_likelihood(t, beta, xs, ys, gamma, alpha):
    p = weibull_eval(PsychometricParams(gamma, alpha, beta, t), xs)
    p = np.clip(p, _P_FLOOR, 1.0 - _P_FLOOR)
    return -float(np.sum(ys * np.log(p) + (1.0 - ys) * np.log(1.0 - p)))


def fit_weibull(
    trials: list[TrialRecord], gamma: float = 0.5, alpha: float = 0.75
) -> PsychometricParams:
    """Maximum-likelihood Weibull fit of one direction's trials.

    All trials must share the stimulus sign (fit per direction); the fit
    runs on magnitudes and returns an unsigned threshold. A coarse grid
    scan over the bounded (t, beta) region seeds a Nelder-Mead refinement.

    Raises :class:`FitError` for degenerate data: fewer than two trials,
    all-correct or all-incorrect responses, or a single stimulus level.
    """
    if len(trials) < 2:
        raise FitError("need at least two trials")
    signs = {np.sign(tr.x) for tr in trials if tr.x != 0.0}
    if len(signs) > 1:
        raise FitError("trials mix positive and negative stimuli; fit per direction")
    xs = np.array([abs(tr.x) for tr in trials])
    ys = np.array([1.0 if tr.correct else 0.0 for tr in trials])
    if ys.min() == ys.max():
        raise FitError("all responses identical; observer-image pair unfittable")
    if np.unique(xs).size < 2:
        raise FitError("need trials at two or more distinct magnitudes")

    t_grid = np.geomspace(T_BOUNDS[0], T_BOUNDS[1], 48)
    b_grid = np.geomspace(BETA_BOUNDS[0], BETA_BOUNDS[1], 24)
    best = (np.inf, t_grid[0], b_grid[0])
    for t0 in t_grid:
        for b0 in b_grid:
            nll = _neg_log_likelihood(t0, b0, xs, ys, gamma, alpha)
            if nll < best[0]:
                best = (nll, t0, b0)

    def objective(z):
        t = float(np.clip(z[0], *T_BOUNDS))
        b = float(np.clip(z[1], *BETA_BOUNDS))
        return _neg_log_likelihood(t, b, xs, ys, gamma, alpha)

    res = optimize.minimize(
        objective,
        np.array([best[1], best[2]]),
        method="Nelder-Mead",
        options={"xatol": 1e-7, "fatol": 1e-10, "maxiter": 2000},
    )
    t_hat = float(np.clip(res.x[0], *T_BOUNDS))
    b_hat = float(np.clip(res.x[1], *BETA_BOUNDS))
    return PsychometricParams(gamma, alpha, b_hat, t_hat)


def bootstrap_mean(values, n_bootstrap: int, seed: int) -> ThresholdEstimate:
    """Bootstrap the mean of pooled thresholds with percentile CI bounds."""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise ValueError("no values to bootstrap")
    if n_bootstrap < 1:
        raise ValueError("n_bootstrap must be >= 1")
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, values.size, size=(n_bootstrap, values.size))
    means = values[idx].mean(axis=1)
    lo, hi = np.percentile(means, [2.5, 97.5])
    mean = float(means.mean())
    return ThresholdEstimate(
        mean=mean,
        ci_low=min(float(lo), mean),
        ci_high=max(float(hi), mean),
        n_observers=int(values.size),
        n_bootstrap=int(n_bootstrap),
    )


def remove_outliers(values, k_sd: float = 3.0) -> list[float]:
    """Drop values beyond ``k_sd`` standard deviations of the input mean.

    Single pass over the input distribution; never returns an empty list
    (the element nearest the mean is retained if everything else falls
    outside the band).
    """
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise ValueError("no values given")
    mean = values.mean()
    sd = values.std()
    keep = np.abs(values - mean) <= k_sd * sd
    if not keep.any():
        keep[np.argmin(np.abs(values - mean))] = True
    return [float(v) for v in values[keep]]


@dataclass
class SimulatedObserver:
    """Weibull observer with known per-direction thresholds.

    ``respond(x)`` draws a correct/incorrect response for a signed
    stimulus from the direction's true psychometric function.
    """

    neg: PsychometricParams
    pos: PsychometricParams
    seed: int = 0
    _rng: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        self._rng = np.random.default_rng(self.seed)

    def p_correct(self, x: float) -> float:
        params = self.neg if x < 0 else self.pos
        return float(weibull_eval(params, abs(x)))

    def respond(self, x: float) -> bool:
        return bool(self._rng.random() < self.p_correct(x))


# --- trial-log and threshold-table I/O -------------------------------------

TRIAL_FIELDS = ("observer_id", "image_id", "direction", "x", "correct", "timestamp")


def write_trial_log(path: str | Path, rows: list[dict]) -> None:
    """Write trial rows (one JSON record per line)."""
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps({k: row[k] for k in TRIAL_FIELDS}) + "\n")


def read_trial_log(path: str | Path) -> list[dict]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append(json.loads(line))
    return rows


def write_threshold_table(path: str | Path, pairs: dict[str, ThresholdPair]) -> None:
    """Write pooled thresholds as CSV rows, one image per line."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["image_id", "x_t_neg", "x_t_pos", "neg_ci_low", "neg_ci_high",
             "pos_ci_low", "pos_ci_high", "n_observers"]
        )
        for image_id in sorted(pairs):
            p = pairs[image_id]
            writer.writerow(
                [image_id, p.neg.mean, p.pos.mean, p.neg.ci_low, p.neg.ci_high,
                 p.pos.ci_low, p.pos.ci_high, p.neg.n_observers]
            )


def threshold_pair_to_dict(pair: ThresholdPair) -> dict:
    return {"neg": asdict(pair.neg), "pos": asdict(pair.pos)}
