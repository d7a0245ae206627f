"""Learning-curve records emitted by every agent."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class CurvePoint:
    step: int
    episode: int
    metric: str
    value: float


@dataclass
class LearningCurve:
    run_id: str = ""
    seed: int = 0
    points: list[CurvePoint] = field(default_factory=list)
    # in-memory run products (tables, counts, networks); never serialised
    artifacts: dict = field(default_factory=dict, repr=False)
    _last: dict = field(default_factory=dict, repr=False)

    def add(self, step: int, episode: int, metric: str, value: float) -> None:
        last = self._last.get(metric)
        if last is not None and step <= last:
            raise ValueError(f"metric {metric!r}: step {step} is not after {last}")
        self._last[metric] = step
        self.points.append(CurvePoint(int(step), int(episode), metric, float(value)))

    def metrics(self) -> list[str]:
        return list(dict.fromkeys(p.metric for p in self.points))

    def values(self, metric: str) -> np.ndarray:
        return np.array([p.value for p in self.points if p.metric == metric])

    def episodes(self, metric: str) -> np.ndarray:
        return np.array([p.episode for p in self.points if p.metric == metric])

    def final(self, metric: str) -> float:
        v = self.values(metric)
        if v.size == 0:
            raise KeyError(metric)
        return float(v[-1])


def episodes_to_first_success(curve: LearningCurve, metric: str = "success") -> int:
    """1-based index of the first successful episode; ``len + 1`` if none succeeded."""
    v = curve.values(metric)
    hits = np.flatnonzero(v > 0)
    return int(hits[0]) + 1 if hits.size else int(v.size) + 1


def success_auc(curve: LearningCurve, metric: str = "success") -> float:
    """Mean per-episode success, i.e. the normalised area under the success curve."""
    v = curve.values(metric)
    return float(v.mean()) if v.size else 0.0
