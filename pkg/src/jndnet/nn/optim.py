"""Adam optimizer and the cosine annealing schedule with warm restarts."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class AdamState:
    """First/second moment accumulators keyed by parameter name."""

    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params, state: AdamState, lr: float) -> AdamState:
    """One bias-corrected Adam update, in place, over trainable params."""
    state.step += 1
    bc1 = 1.0 - state.beta1**state.step
    bc2 = 1.0 - state.beta2**state.step
    for p in params:
        if not p.trainable:
            continue
        g = p.grad
        if p.name not in state.m:
            state.m[p.name] = np.zeros_like(p.value)
            state.v[p.name] = np.zeros_like(p.value)
        m, v = state.m[p.name], state.v[p.name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p.value -= lr * (m / bc1) / (np.sqrt(v / bc2) + state.epsilon)
    return state


@dataclass(frozen=True)
class LrSchedule:
    """Cosine decay from a shrinking per-cycle maximum down to ``lr_min``.

    Each cycle starts at the current maximum and anneals to ``lr_min``;
    after a cycle the maximum shrinks to ``max_decay`` of its value and
    the next cycle lasts ``cycle_growth`` times as many epochs.
    """

    lr_min: float = 1e-6
    lr_max: float = 1e-4
    cycle_epochs: float = 5.0
    max_decay: float = 0.9
    cycle_growth: float = 1.5

    def __post_init__(self):
        if not 0.0 < self.lr_min < self.lr_max:
            raise ValueError("need 0 < lr_min < lr_max")
        if self.cycle_growth < 1.0 or self.cycle_epochs <= 0.0:
            raise ValueError("cycle length must be positive and non-shrinking")


def lr_at(schedule: LrSchedule, epoch: float) -> float:
    """Learning rate at a (possibly fractional) epoch position."""
    if epoch < 0.0:
        raise ValueError("epoch must be >= 0")
    start = 0.0
    length = schedule.cycle_epochs
    peak = schedule.lr_max
    while epoch >= start + length:
        start += length
        length *= schedule.cycle_growth
        peak *= schedule.max_decay
    frac = (epoch - start) / length
    return schedule.lr_min + (peak - schedule.lr_min) * 0.5 * (1.0 + np.cos(np.pi * frac))
