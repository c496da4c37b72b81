"""Phase portraits of the safe controllers on a planar ball slice."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..controllers import ControllerConfig, ReferenceGains, reference_controller, unified_control
from ..dynamics import Ball2D
from ..safety_index import ObstacleState, SafetyEvaluation, _evaluate, _pair

PHASE_COLUMNS = ("x", "y", "phi", "u0x", "u0y", "ux", "uy")


@dataclass(frozen=True)
class PhaseSlice:
    """Position grid at a fixed robot velocity, with a static obstacle."""

    x_range: tuple[float, float] = (-3.0, 3.0)
    y_range: tuple[float, float] = (-3.0, 3.0)
    velocity: tuple[float, float] = (1.0, 0.0)
    obstacle: tuple[float, float] = (0.0, 0.0)
    goal: tuple[float, float] = (4.0, 0.0)
    gains: ReferenceGains = field(default_factory=ReferenceGains)


@dataclass(frozen=True)
class PhaseGrid:
    x: np.ndarray
    y: np.ndarray
    phi: np.ndarray  # NaN where the robot sits on the obstacle
    u0: np.ndarray
    u: np.ndarray

    @property
    def delta_u(self) -> np.ndarray:
        return self.u - self.u0

    def rows(self):
        for i in range(len(self.x)):
            yield (self.x[i], self.y[i], self.phi[i], *self.u0[i], *self.u[i])


def _axis(bounds, n):
    lo, hi = bounds
    return np.array([0.5 * (lo + hi)]) if n == 1 else np.linspace(lo, hi, n)


def phase_portrait(cfg: ControllerConfig, slice_: PhaseSlice | None = None, resolution: int = 41) -> PhaseGrid:
    """Evaluate the safe control on a ``resolution x resolution`` position grid.

    Rows run with ``x`` fastest. A resolution of 1 samples the slice centre.
    """
    if resolution < 1:
        raise ValueError(f"resolution must be at least 1, got {resolution}")
    slice_ = slice_ or PhaseSlice()
    model = Ball2D()
    gx, gy = np.meshgrid(_axis(slice_.x_range, resolution), _axis(slice_.y_range, resolution))
    xs, ys = gx.ravel(), gy.ravel()
    n = len(xs)
    state = np.column_stack([xs, ys, np.full(n, slice_.velocity[0]), np.full(n, slice_.velocity[1])])
    obstacle = ObstacleState(np.broadcast_to(np.asarray(slice_.obstacle, dtype=float), (n, 2)))
    pair = _pair(model, state, obstacle)
    on_top = pair.d <= 0
    ev = _evaluate(model, state, obstacle, cfg.safety, pair)
    ev = SafetyEvaluation(
        ev.phi,
        np.where(on_top[:, None], 0.0, ev.grad_phi),
        np.where(on_top, 0.0, ev.lf_phi),
        np.where(on_top[:, None], 0.0, ev.lg_phi),
        pair,
    )
    u0 = reference_controller(model, state, np.asarray(slice_.goal, dtype=float), slice_.gains)
    u = unified_control(cfg, u0, ev).u
    return PhaseGrid(xs, ys, np.where(on_top, np.nan, ev.phi), u0, u)
