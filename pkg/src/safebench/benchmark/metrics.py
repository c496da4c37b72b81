"""Efficiency, safety and hybrid scores."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .episode import EpisodeLog
from .humans import HumanKind

SAFETY_DISTANCE = 2.0


def efficiency_score(log: EpisodeLog) -> int:
    """Goals reached; with an interactive human the human's goals count too."""
    count = len(log.goal_events("robot"))
    if log.human_kind == HumanKind.INTERACTIVE.value:
        count += len(log.goal_events("human"))
    return count


def safety_terms(d, d_dot, d_s: float = SAFETY_DISTANCE) -> np.ndarray:
    """Per-frame terms ``-min(0, log(d/d_s)) * ddot``; zero where ``d`` is not positive."""
    if not d_s > 0:
        raise ValueError(f"d_s must be positive, got {d_s}")
    d = np.asarray(d, dtype=float)
    d_dot = np.asarray(d_dot, dtype=float)
    pos = d > 0
    log_ratio = np.log(np.where(pos, d, d_s) / d_s)
    return np.where(pos, -np.minimum(0.0, log_ratio) * d_dot, 0.0)


def safety_score(log: EpisodeLog, d_s: float = SAFETY_DISTANCE) -> float:
    """Sum over frames, with no time step factor."""
    return float(np.sum(safety_terms(log.d, log.d_dot, d_s)))


def intervention_rate(log: EpisodeLog) -> float:
    return float(np.mean(log.intervened)) if log.n_frames else 0.0


@dataclass(frozen=True)
class MetricsReport:
    efficiency: int
    safety: float
    collided: bool
    intervention_rate: float
    min_distance: float
    valid: bool = True

    @classmethod
    def from_log(cls, log: EpisodeLog, d_s: float = SAFETY_DISTANCE) -> MetricsReport:
        return cls(
            efficiency=efficiency_score(log),
            safety=safety_score(log, d_s),
            collided=log.collided,
            intervention_rate=intervention_rate(log),
            min_distance=float(np.min(log.d)),
            valid=log.valid,
        )


def hybrid_score(results) -> float | None:
    """Best mean efficiency among collision-free parameter points.

    ``results`` holds ``(params, mean_efficiency, any_collision)`` triples.
    """
    clean = [eff for _, eff, collided in results if not collided]
    return max(clean) if clean else None
