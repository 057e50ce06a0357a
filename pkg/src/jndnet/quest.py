"""Bayesian adaptive staircase over a grid of candidate thresholds.

Each trial is placed at the current posterior mode of the threshold (the
classic formulation; a posterior-mean placement is available by flag).
Updates add the Weibull log-likelihood of the observed response for every
grid candidate, so trial order never changes the posterior.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

GRID_BOUNDS = (0.01, 3.4)
DEFAULT_GRID_SIZE = 256
DEFAULT_BETA = 3.5
MIN_GRID_SIZE = 16

_LIK_FLOOR = 1e-12


@dataclass(frozen=True)
class QuestState:
    """Immutable staircase state: candidate grid and log-posterior."""

    grid: np.ndarray
    log_posterior: np.ndarray
    assumed_beta: float
    assumed_gamma: float
    assumed_alpha: float
    trial_count: int
    use_mean: bool = False

    def to_dict(self) -> dict:
        return {
            "grid_lo": float(self.grid[0]),
            "grid_hi": float(self.grid[-1]),
            "grid_size": int(self.grid.size),
            "log_posterior": [float(v) for v in self.log_posterior],
            "assumed_beta": self.assumed_beta,
            "assumed_gamma": self.assumed_gamma,
            "assumed_alpha": self.assumed_alpha,
            "trial_count": self.trial_count,
            "use_mean": self.use_mean,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "QuestState":
        grid = np.geomspace(d["grid_lo"], d["grid_hi"], d["grid_size"])
        return cls(
            grid=grid,
            log_posterior=np.asarray(d["log_posterior"], dtype=np.float64),
            assumed_beta=d["assumed_beta"],
            assumed_gamma=d["assumed_gamma"],
            assumed_alpha=d["assumed_alpha"],
            trial_count=d["trial_count"],
            use_mean=d.get("use_mean", False),
        )


def quest_init(
    prior_mean: float,
    prior_sd: float,
    assumed_beta: float = DEFAULT_BETA,
    grid_size: int = DEFAULT_GRID_SIZE,
    assumed_gamma: float = 0.5,
    assumed_alpha: float = 0.75,
    grid_bounds: tuple[float, float] = GRID_BOUNDS,
    use_mean: bool = False,
) -> QuestState:
    """Fresh state with a Gaussian prior over a log-spaced threshold grid."""
    if prior_sd <= 0.0 or not np.isfinite(prior_mean) or prior_mean <= 0.0:
        raise ValueError("prior mean must be positive and sd > 0")
    if grid_size < MIN_GRID_SIZE:
        raise ValueError(f"grid_size must be >= {MIN_GRID_SIZE}, got {grid_size}")
    if assumed_beta <= 0.0:
        raise ValueError("assumed slope must be positive")
    grid = np.geomspace(grid_bounds[0], grid_bounds[1], grid_size)
    log_prior = -((grid - prior_mean) ** 2) / (2.0 * prior_sd**2)
    return QuestState(
        grid=grid,
        log_posterior=log_prior - log_prior.max(),
        assumed_beta=assumed_beta,
        assumed_gamma=assumed_gamma,
        assumed_alpha=assumed_alpha,
        trial_count=0,
        use_mean=use_mean,
    )


def quest_next(state: QuestState) -> float:
    """Stimulus magnitude for the next trial (deterministic given state)."""
    if state.use_mean:
        return _posterior_mean(state)
    return float(state.grid[int(np.argmax(state.log_posterior))])


def quest_update(state: QuestState, x: float, correct: bool) -> QuestState:
    """Return the state updated with one response at magnitude ``x > 0``."""
    if x <= 0.0 or not np.isfinite(x):
        raise ValueError("stimulus magnitude must be positive and finite")
    # Weibull response probability at x for every candidate threshold,
    # vectorized over the grid (matches psychometric.weibull_eval).
    gamma, beta = state.assumed_gamma, state.assumed_beta
    k = (-np.log((1.0 - state.assumed_alpha) / (1.0 - gamma))) ** (1.0 / beta)
    p = 1.0 - (1.0 - gamma) * np.exp(-((k * x / state.grid) ** beta))
    lik = p if correct else 1.0 - p
    log_post = state.log_posterior + np.log(np.maximum(lik, _LIK_FLOOR))
    log_post = log_post - log_post.max()
    return replace(state, log_posterior=log_post, trial_count=state.trial_count + 1)


def _posterior_mean(state: QuestState) -> float:
    w = np.exp(state.log_posterior - state.log_posterior.max())
    w /= w.sum()
    return float(np.sum(w * state.grid))


def quest_estimate(state: QuestState) -> float:
    """Posterior-mean threshold estimate; requires at least one trial."""
    if state.trial_count < 1:
        raise ValueError("no trials recorded yet")
    return _posterior_mean(state)
