"""Live 2AFC experiment sessions driven by the adaptive staircase.

A session walks an observer through a queue of images (a discarded
calibration image first), interleaving negative and positive staircases
per image, rendering stimulus pairs on demand, and logging every event to
an append-only store so a session can be resumed and exactly replayed.
Finalizing fits one psychometric function per image and direction;
thresholds are pooled across observers with outlier removal and a
bootstrapped mean.
"""

from __future__ import annotations

import json
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .color import apply_exposure_shift
from .datagen import DatasetRecord
from .psychometric import (
    FitError,
    ThresholdPair,
    TrialRecord,
    bootstrap_mean,
    fit_weibull,
    remove_outliers,
)
from . import quest

DISPLAY_SECONDS = 5.0
TRIALS_PER_DIRECTION = 20
CALIBRATION_TRIALS = 20
DIRECTIONS = (-1, +1)


@dataclass
class SessionConfig:
    trials_per_direction: int = TRIALS_PER_DIRECTION
    calibration_trials: int = CALIBRATION_TRIALS
    quest_prior_mean: float = 0.5
    quest_prior_sd: float = 0.3
    quest_beta: float = quest.DEFAULT_BETA
    gamma: float = 0.5
    alpha: float = 0.75


@dataclass
class StimulusPresentation:
    """One rendered trial; ``correct_side`` never leaves the server."""

    trial_id: str
    image_id: str
    direction: int
    x: float
    correct_side: str  # side showing the original
    left: np.ndarray
    right: np.ndarray
    mask: np.ndarray
    calibration: bool
    deadline_seconds: float = DISPLAY_SECONDS


@dataclass
class ExperimentSession:
    """Single-observer session state; one writer at a time."""

    session_id: str
    observer_id: str
    image_queue: list[str]  # calibration image first
    config: SessionConfig
    seed: int
    rng: np.random.Generator = field(init=False, repr=False)
    states: dict = field(default_factory=dict)  # (image_id, dir) -> QuestState
    trials: list[dict] = field(default_factory=list)
    pending: StimulusPresentation | None = None
    _fit_cache: dict | None = None

    def __post_init__(self):
        self.rng = np.random.default_rng([self.seed, 97])
        for image_id in self.image_queue:
            for direction in DIRECTIONS:
                self.states.setdefault(
                    (image_id, direction),
                    quest.quest_init(
                        self.config.quest_prior_mean,
                        self.config.quest_prior_sd,
                        assumed_beta=self.config.quest_beta,
                        assumed_gamma=self.config.gamma,
                        assumed_alpha=self.config.alpha,
                    ),
                )

    # --- progress ------------------------------------------------------------

    def _quota(self, image_id: str, direction: int) -> int:
        if image_id == self.image_queue[0]:
            return self.config.calibration_trials // 2
        return self.config.trials_per_direction

    def _done(self, image_id: str) -> bool:
        return all(
            self.states[(image_id, d)].trial_count >= self._quota(image_id, d)
            for d in DIRECTIONS
        )

    def current_image(self) -> str | None:
        for image_id in self.image_queue:
            if not self._done(image_id):
                return image_id
        return None

    @property
    def status(self) -> str:
        current = self.current_image()
        if current is None:
            return "finished"
        if current == self.image_queue[0]:
            return "calibrating"
        return "running"

    def progress(self) -> dict:
        done = sum(1 for image_id in self.image_queue if self._done(image_id))
        return {
            "status": self.status,
            "images_done": done,
            "images_total": len(self.image_queue),
            "trials_done": len(self.trials),
            "current_image": self.current_image(),
        }

    # --- trial flow ----------------------------------------------------------

    def next_trial(self, dataset: dict[str, DatasetRecord]) -> StimulusPresentation:
        """Render the pending trial, creating one if none is outstanding.

        Repeated calls without an intervening response return the same
        presentation, so a reloading client resumes mid-trial.
        """
        if self.pending is not None:
            return self.pending
        image_id = self.current_image()
        if image_id is None:
            raise RuntimeError("session is finished")
        open_dirs = [
            d for d in DIRECTIONS
            if self.states[(image_id, d)].trial_count < self._quota(image_id, d)
        ]
        direction = int(open_dirs[int(self.rng.integers(len(open_dirs)))])
        magnitude = quest.quest_next(self.states[(image_id, direction)])
        x = direction * magnitude
        record = dataset[image_id]
        shifted = apply_exposure_shift(record.image, record.mask, x)
        correct_side = "left" if self.rng.random() < 0.5 else "right"
        left, right = (record.image, shifted) if correct_side == "left" else (shifted, record.image)
        self.pending = StimulusPresentation(
            trial_id=uuid.uuid4().hex,
            image_id=image_id,
            direction=direction,
            x=float(x),
            correct_side=correct_side,
            left=left,
            right=right,
            mask=record.mask,
            calibration=image_id == self.image_queue[0],
        )
        return self.pending

    def submit_response(self, trial_id: str, chosen_side: str,
                        timestamp: float | None = None) -> dict:
        if chosen_side not in ("left", "right"):
            raise ValueError(f"invalid side {chosen_side!r}")
        if self.pending is None or self.pending.trial_id != trial_id:
            raise KeyError(f"no pending trial with id {trial_id}")
        trial = self.pending
        correct = chosen_side == trial.correct_side
        key = (trial.image_id, trial.direction)
        self.states[key] = quest.quest_update(self.states[key], abs(trial.x), correct)
        self.trials.append(
            {
                "observer_id": self.observer_id,
                "image_id": trial.image_id,
                "direction": trial.direction,
                "x": trial.x,
                "correct": correct,
                "calibration": trial.calibration,
                "timestamp": time.time() if timestamp is None else timestamp,
            }
        )
        self.pending = None
        self._fit_cache = None
        return {"correct": correct, **self.progress()}

    # --- analysis --------------------------------------------------------------

    def finalize(self) -> dict[str, dict[str, float | None]]:
        """Per-image fitted thresholds (signed); calibration trials excluded.

        Unfittable image-directions map to None. Idempotent: repeated
        calls return the same result for the same trial log.
        """
        if self._fit_cache is not None:
            return self._fit_cache
        result: dict[str, dict[str, float | None]] = {}
        for image_id in self.image_queue[1:]:
            fits: dict[str, float | None] = {}
            for direction in DIRECTIONS:
                rows = [
                    t for t in self.trials
                    if t["image_id"] == image_id and t["direction"] == direction
                    and not t["calibration"]
                ]
                trials = [TrialRecord(x=row["x"], correct=row["correct"]) for row in rows]
                try:
                    fit = fit_weibull(trials, self.config.gamma, self.config.alpha)
                    value = float(direction * fit.t)
                except FitError:
                    value = None
                fits["neg" if direction < 0 else "pos"] = value
            result[image_id] = fits
        self._fit_cache = result
        return result


def create_session(
    observer_id: str,
    image_ids: list[str],
    dataset: dict[str, DatasetRecord],
    calibration_image_id: str,
    config: SessionConfig | None = None,
    seed: int | None = None,
) -> ExperimentSession:
    """New session: the calibration image is prepended to the queue."""
    unknown = [i for i in list(image_ids) + [calibration_image_id] if i not in dataset]
    if unknown:
        raise KeyError(f"unknown images: {unknown}")
    if calibration_image_id in image_ids:
        raise ValueError("calibration image must not be in the measured sample")
    if seed is None:
        seed = int(np.random.SeedSequence().entropy % (2**31))
    return ExperimentSession(
        session_id=uuid.uuid4().hex,
        observer_id=observer_id,
        image_queue=[calibration_image_id] + list(image_ids),
        config=config or SessionConfig(),
        seed=seed,
    )


def pool_thresholds(
    fitted: list[dict[str, dict[str, float | None]]],
    image_id: str,
    n_bootstrap: int = 1000,
    seed: int = 0,
    k_sd: float = 3.0,
) -> ThresholdPair:
    """Across-observer threshold pair: outlier removal then bootstrap."""
    neg = [f[image_id]["neg"] for f in fitted if f.get(image_id, {}).get("neg") is not None]
    pos = [f[image_id]["pos"] for f in fitted if f.get(image_id, {}).get("pos") is not None]
    if not neg or not pos:
        raise ValueError(f"no fitted thresholds for image {image_id}")
    return ThresholdPair(
        neg=bootstrap_mean(remove_outliers(neg, k_sd), n_bootstrap, seed),
        pos=bootstrap_mean(remove_outliers(pos, k_sd), n_bootstrap, seed + 1),
    )


# --- persistence ------------------------------------------------------------


class SessionStore:
    """Append-only JSONL event store; replaying events rebuilds sessions."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def _path(self, session_id: str) -> Path:
        return self.root / f"session-{session_id}.jsonl"

    def append(self, session_id: str, event: dict) -> None:
        with open(self._path(session_id), "a", encoding="utf-8") as fh:
            fh.write(json.dumps(event) + "\n")

    def record_created(self, session: ExperimentSession) -> None:
        self.append(
            session.session_id,
            {
                "type": "created",
                "session_id": session.session_id,
                "observer_id": session.observer_id,
                "image_queue": session.image_queue,
                "seed": session.seed,
                "config": session.config.__dict__,
            },
        )

    def record_served(self, session_id: str, trial: StimulusPresentation) -> None:
        self.append(
            session_id,
            {
                "type": "served",
                "trial_id": trial.trial_id,
                "image_id": trial.image_id,
                "direction": trial.direction,
                "x": trial.x,
                "correct_side": trial.correct_side,
                "calibration": trial.calibration,
            },
        )

    def record_response(self, session_id: str, trial_id: str, chosen_side: str,
                        correct: bool, timestamp: float) -> None:
        self.append(
            session_id,
            {
                "type": "responded",
                "trial_id": trial_id,
                "chosen_side": chosen_side,
                "correct": correct,
                "timestamp": timestamp,
            },
        )

    def session_ids(self) -> list[str]:
        return sorted(
            p.stem.removeprefix("session-") for p in self.root.glob("session-*.jsonl")
        )

    def load(self, session_id: str, dataset: dict[str, DatasetRecord]) -> ExperimentSession:
        """Rebuild a session by replaying its event log.

        Served trials are re-derived through the live code path (consuming
        the same random draws) and checked against the logged values, so a
        reloaded session continues exactly where the original would have.
        """
        path = self._path(session_id)
        if not path.exists():
            raise KeyError(f"unknown session {session_id}")
        events = [json.loads(line) for line in path.read_text().splitlines() if line.strip()]
        if not events or events[0]["type"] != "created":
            raise ValueError(f"corrupt event log for session {session_id}")
        head = events[0]
        session = ExperimentSession(
            session_id=head["session_id"],
            observer_id=head["observer_id"],
            image_queue=list(head["image_queue"]),
            config=SessionConfig(**head["config"]),
            seed=head["seed"],
        )
        for event in events[1:]:
            if event["type"] == "served":
                trial = session.next_trial(dataset)
                if (
                    trial.image_id != event["image_id"]
                    or trial.direction != event["direction"]
                    or abs(trial.x - event["x"]) > 1e-9
                    or trial.correct_side != event["correct_side"]
                ):
                    raise ValueError(f"event log diverges at trial {event['trial_id']}")
                trial.trial_id = event["trial_id"]
                session.pending = trial
            elif event["type"] == "responded":
                session.submit_response(
                    event["trial_id"], event["chosen_side"], timestamp=event["timestamp"]
                )
        return session
