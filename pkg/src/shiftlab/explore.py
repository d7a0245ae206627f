"""Action-selection helpers shared by the tabular and deep agents."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# values this close to the maximum count as tied
TIE_ATOL = 1e-9


@dataclass(frozen=True)
class EpsilonSchedule:
    """Linear decay from ``start`` to ``end`` over the first ``fraction`` of training."""

    start: float = 0.9
    end: float = 0.05
    fraction: float = 0.2

    def __post_init__(self) -> None:
        if not self.start >= self.end >= 0:
            raise ValueError("epsilon schedule needs start >= end >= 0")
        if not 0 < self.fraction <= 1:
            raise ValueError("epsilon decay fraction must lie in (0, 1]")


def epsilon_at(schedule: EpsilonSchedule, progress: float) -> float:
    if not 0.0 <= progress <= 1.0:
        raise ValueError(f"progress must lie in [0, 1], got {progress}")
    if progress >= schedule.fraction:
        return schedule.end
    return schedule.start + (schedule.end - schedule.start) * progress / schedule.fraction


def greedy_set(values) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    return np.flatnonzero(v >= v.max() - TIE_ATOL)


def argmax_random(values, rng: np.random.Generator) -> int:
    """Argmax with uniform tie-breaking among (near-)maximisers."""
    best = greedy_set(values)
    if best.size == 1:
        return int(best[0])
    return int(best[rng.integers(best.size)])


def epsilon_greedy(values, epsilon: float, rng: np.random.Generator) -> int:
    if rng.random() < epsilon:
        return int(rng.integers(len(values)))
    return argmax_random(values, rng)
