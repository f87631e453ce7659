"""Deterministic DDIM transitions between noise levels."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DegenerateAlpha, IndexOutOfRange


@dataclass(frozen=True)
class SchedulerConfig:
    """Cumulative signal coefficients indexed by noise level.

    ``alphas[0]`` is the cleanest level and the sequence decreases strictly,
    so level ``t + 1`` is noisier than level ``t``.
    """

    alphas: tuple[float, ...]

    def __post_init__(self):
        a = np.asarray(self.alphas, dtype=np.float64)
        if a.size and (a[0] > 1.0 or a[-1] <= 0.0):
            raise ValueError("alphas must lie in (0, 1]")
        if a.size > 1 and np.any(np.diff(a) >= 0):
            raise ValueError("alphas must be strictly decreasing")

    @classmethod
    def linear(cls, steps: int, start: float = 0.999, end: float = 0.1) -> SchedulerConfig:
        return cls(tuple(float(a) for a in np.linspace(start, end, steps)))

    @property
    def steps(self) -> int:
        return len(self.alphas)


def ddim_transition(z, eps, alpha_from: float, alpha_to: float):
    """Move ``z`` from level ``alpha_from`` to ``alpha_to`` given predicted noise.

    Evaluated as ``r z + (sqrt(1 - a_to) - r sqrt(1 - a_from)) eps`` with
    ``r = sqrt(a_to / a_from)``, which is the same update regrouped so that
    ``eps = 0`` and ``a_to == a_from`` reduce exactly in floating point.
    """
    if alpha_from <= 0.0:
        raise DegenerateAlpha("alpha_t must be positive")
    ratio = np.sqrt(alpha_to / alpha_from)
    return ratio * z + (np.sqrt(1.0 - alpha_to) - ratio * np.sqrt(1.0 - alpha_from)) * eps


def ddim_step(z, eps, t: int, sched: SchedulerConfig):
    """One update from level ``t`` to level ``t + 1`` of ``sched``."""
    if t < 0 or t + 1 >= sched.steps:
        raise IndexOutOfRange(f"step {t} -> {t + 1} outside schedule of length {sched.steps}")
    return ddim_transition(z, eps, sched.alphas[t], sched.alphas[t + 1])
