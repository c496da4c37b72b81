"""Parameter sweeps and the safety/efficiency trade-off frontier."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from ..controllers import Algorithm, ControllerConfig
from ..dynamics import RobotModel
from ..estimation import EstimationConfig
from ..safety_index import SafetyIndexParams
from .episode import EpisodeSettings, simulate
from .humans import HumanModel
from .metrics import SAFETY_DISTANCE, MetricsReport, hybrid_score
from .scenarios import Scenario

DEFAULT_DMIN = (0.5, 1.0, 1.5, 2.0, 3.0)
DEFAULT_K = (0.5, 1.0, 2.0)
GAIN_GRID = tuple(np.logspace(0.0, 2.0, 5).tolist())
RATE_GRID = tuple((-np.logspace(-1.0, 1.0, 5)).tolist())


def default_parameter_grid(algorithm: Algorithm | str) -> tuple[float, ...]:
    alg = Algorithm(algorithm)
    return GAIN_GRID if alg in (Algorithm.PFM, Algorithm.SMA) else RATE_GRID


@dataclass(frozen=True)
class SweepSpec:
    model: RobotModel
    algorithm: Algorithm
    scenarios: list[Scenario]
    human: HumanModel | None = None
    estimation: EstimationConfig = field(default_factory=EstimationConfig)
    d_min: tuple[float, ...] = DEFAULT_DMIN
    k: tuple[float, ...] = DEFAULT_K
    parameter: tuple[float, ...] | None = None
    settings: EpisodeSettings = field(default_factory=EpisodeSettings)
    d_s: float = SAFETY_DISTANCE

    def __post_init__(self):
        object.__setattr__(self, "algorithm", Algorithm(self.algorithm))
        if self.parameter is None:
            object.__setattr__(self, "parameter", default_parameter_grid(self.algorithm))
        for name in ("d_min", "k", "parameter"):
            values = tuple(float(v) for v in getattr(self, name))
            if not values:
                raise ValueError(f"empty {name} grid")
            object.__setattr__(self, name, values)
        if not self.scenarios:
            raise ValueError("a sweep needs at least one scenario")

    def configs(self) -> list[ControllerConfig]:
        return [
            ControllerConfig(self.algorithm, SafetyIndexParams(d, k)).with_parameter(p)
            for d, k, p in itertools.product(self.d_min, self.k, self.parameter)
        ]


@dataclass(frozen=True)
class SweepPoint:
    index: int
    config: ControllerConfig
    safety: float  # mean over scenarios
    efficiency: float  # mean over scenarios
    collided: bool  # any scenario collided
    collisions: int
    invalid: int
    reports: tuple[MetricsReport, ...]

    @property
    def params(self) -> dict:
        cfg = self.config
        return {"dmin": cfg.safety.d_min, "k": cfg.safety.k, cfg.parameter_name: cfg.parameter_value}


@dataclass(frozen=True)
class SweepResult:
    algorithm: Algorithm
    points: list[SweepPoint]
    frontier: list[tuple[float, float]]
    hybrid: float | None


def evaluate_config(spec: SweepSpec, cfg: ControllerConfig, index: int) -> SweepPoint:
    logs = simulate(spec.model, cfg, spec.scenarios, spec.human, spec.estimation, index, spec.settings)
    reports = tuple(MetricsReport.from_log(log, spec.d_s) for log in logs)
    collisions = sum(r.collided for r in reports)
    return SweepPoint(
        index=index,
        config=cfg,
        safety=float(np.mean([r.safety for r in reports])),
        efficiency=float(np.mean([r.efficiency for r in reports])),
        collided=collisions > 0,
        collisions=collisions,
        invalid=sum(not r.valid for r in reports),
        reports=reports,
    )


def tradeoff_sweep(spec: SweepSpec, progress=None) -> SweepResult:
    points = []
    for index, cfg in enumerate(spec.configs()):
        points.append(evaluate_config(spec, cfg, index))
        if progress is not None:
            progress(points[-1])
    frontier = upper_right_frontier([(p.safety, p.efficiency) for p in points])
    hybrid = hybrid_score([(p.params, p.efficiency, p.collided) for p in points])
    return SweepResult(spec.algorithm, points, frontier, hybrid)


def _cross(o, a, b):
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def upper_right_frontier(points) -> list[tuple[float, float]]:
    """Upper-right convex hull of ``(safety, efficiency)`` points.

    Keeps the non-dominated points that are not strictly below the hull,
    collinear ones included. Sorted by safety ascending, efficiency descending.
    """
    pts = sorted({(float(s), float(e)) for s, e in points})
    pareto = []
    best_eff = -np.inf
    for s, e in reversed(pts):  # safety descending
        if e > best_eff:
            pareto.append((s, e))
            best_eff = e
    pareto.reverse()
    hull: list[tuple[float, float]] = []
    for p in pareto:
        while len(hull) >= 2:
            scale = max(1.0, *(abs(c) for q in (hull[-2], hull[-1], p) for c in q))
            if _cross(hull[-2], hull[-1], p) > 1e-12 * scale * scale:
                hull.pop()
            else:
                break
        hull.append(p)
    return hull


def frontier_efficiency(frontier, levels) -> np.ndarray:
    """Efficiency the frontier reaches at each safety level, linearly interpolated.

    Levels below the frontier's least safe point take its efficiency; levels
    above its safest point are unreachable and give NaN.
    """
    levels = np.asarray(levels, dtype=float)
    s = np.array([p[0] for p in frontier])
    e = np.array([p[1] for p in frontier])
    out = np.interp(levels, s, e)
    return np.where(levels > s[-1], np.nan, out)
