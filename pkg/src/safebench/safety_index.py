"""Safety index ``phi = d_min^2 - d^2 - k * ddot`` and its derivatives.

``phi <= 0`` is the safe set. The obstacle is a point (the human ball centre)
frozen at each evaluation; its velocity enters the approach rate but its
acceleration is ignored.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import (
    ArcParam,
    RobotModel,
    _check,
    closest_on_chain,
    critical_jacobian,
    critical_velocity_jacobian,
)


class CoincidentPointsError(ValueError):
    """Robot and obstacle critical points coincide, so ``phi`` is singular."""


class GradientIllConditionedError(ValueError):
    """The finite-difference step is not small against the distance."""


@dataclass(frozen=True)
class SafetyIndexParams:
    d_min: float
    k: float

    def __post_init__(self):
        if not self.d_min > 0:
            raise ValueError(f"d_min must be positive, got {self.d_min}")
        if not self.k >= 0:
            raise ValueError(f"k must be non-negative, got {self.k}")


@dataclass(frozen=True)
class ObstacleState:
    position: np.ndarray
    velocity: np.ndarray | None = None

    def __post_init__(self):
        pos = np.asarray(self.position, dtype=float)
        vel = np.zeros_like(pos) if self.velocity is None else np.asarray(self.velocity, dtype=float)
        if not (np.all(np.isfinite(pos)) and np.all(np.isfinite(vel))):
            raise ValueError("obstacle state must be finite")
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "velocity", vel)


@dataclass(frozen=True)
class CriticalPair:
    c_r: np.ndarray
    c_o: np.ndarray
    d: np.ndarray
    d_dot: np.ndarray
    jacobian: np.ndarray
    arc: ArcParam
    c_r_dot: np.ndarray
    c_o_dot: np.ndarray


@dataclass(frozen=True)
class SafetyEvaluation:
    phi: np.ndarray
    grad_phi: np.ndarray
    lf_phi: np.ndarray
    lg_phi: np.ndarray
    pair: CriticalPair


def _pair(model: RobotModel, x: np.ndarray, obstacle: ObstacleState) -> CriticalPair:
    c_o = model.lift(obstacle.position)
    c_o_dot = model.lift(obstacle.velocity)
    c_r, arc, d = closest_on_chain(model.joints(x), c_o)
    jac = critical_jacobian(model, x, arc)
    c_r_dot = np.einsum("...ij,...j->...i", jac, model.f(x))
    r = c_r - c_o
    safe_d = np.where(d > 0, d, 1.0)
    d_dot = np.where(d > 0, np.sum(r * (c_r_dot - c_o_dot), axis=-1) / safe_d, 0.0)
    return CriticalPair(c_r, c_o, d, d_dot, jac, arc, c_r_dot, c_o_dot)


def critical_pair(model: RobotModel, x, obstacle: ObstacleState) -> CriticalPair:
    """Closest points, distance and approach rate between robot and obstacle."""
    x = _check(model, x)
    pair = _pair(model, x, obstacle)
    if np.any(pair.d == 0):
        raise CoincidentPointsError("robot and obstacle critical points coincide")
    return pair


def phi(params: SafetyIndexParams, pair: CriticalPair):
    return params.d_min**2 - pair.d**2 - params.k * pair.d_dot


def _fd_steps(x: np.ndarray) -> np.ndarray:
    return 1e-6 * np.maximum(1.0, np.abs(x))


def numeric_gradient(model: RobotModel, x, obstacle: ObstacleState, params: SafetyIndexParams):
    """Central differences of ``x -> phi`` with the closest point re-solved at each probe."""
    x = _check(model, x)
    h = _fd_steps(x)
    pair = _pair(model, x, obstacle)
    if np.any(pair.d <= h.max(axis=-1)):
        raise GradientIllConditionedError("distance is below the finite-difference step")
    n = model.n_x
    offsets = np.eye(n) * h[..., None, :]  # (..., n, n), row i perturbs coordinate i
    probes = np.concatenate([x[..., None, :] + offsets, x[..., None, :] - offsets], axis=-2)
    obs = ObstacleState(obstacle.position[..., None, :], obstacle.velocity[..., None, :])
    values = phi(params, _pair(model, probes, obs))
    return (values[..., :n] - values[..., n:]) / (2.0 * h)


def analytic_gradient(model: RobotModel, x, obstacle: ObstacleState, params: SafetyIndexParams,
                      pair: CriticalPair | None = None):
    """Chain-rule gradient through the closest point.

    The distance term uses the Jacobian at a frozen arc location. The approach
    rate also picks up the sliding of the closest point along its link, which
    matters for arms whose links rotate.
    """
    x = _check(model, x)
    if pair is None:
        pair = _pair(model, x, obstacle)
    r = pair.c_r - pair.c_o
    w = pair.c_r_dot - pair.c_o_dot
    d = np.where(pair.d > 0, pair.d, np.nan)[..., None]
    vel_jac = critical_velocity_jacobian(model, x, pair.arc)
    d_grad = np.einsum("...i,...ij->...j", r, pair.jacobian)  # d * grad(d)
    ddot_grad = (
        np.einsum("...i,...ij->...j", w - pair.d_dot[..., None] * r / d, pair.jacobian)
        + np.einsum("...i,...ij->...j", r, vel_jac)
    ) / d
    if not model.is_point:
        ddot_grad = ddot_grad + _sliding_term(model, x, pair, r, w, d)
    return -2.0 * d_grad - params.k * ddot_grad


def _sliding_term(model, x, pair, r, w, d):
    # Interior minimiser s* solves (c(s) - c_o) . (b - a) = 0; differentiate
    # implicitly and weight by d(ddot)/ds. Zero where s* sits on a clamp.
    link = np.asarray(pair.arc.link)[..., None, None]
    frac = np.asarray(pair.arc.fraction)
    joints = model.joints(x)
    jj = model.joint_jacobians(x)
    a = np.take_along_axis(joints, link, axis=-2)[..., 0, :]
    b = np.take_along_axis(joints, link + 1, axis=-2)[..., 0, :]
    ja = np.take_along_axis(jj, link[..., None], axis=-3)[..., 0, :, :]
    jb = np.take_along_axis(jj, link[..., None] + 1, axis=-3)[..., 0, :, :]
    fx = model.f(x)
    va = np.einsum("...ij,...j->...i", ja, fx)
    vb = np.einsum("...ij,...j->...i", jb, fx)
    seg = b - a
    len2 = np.sum(seg * seg, axis=-1)
    interior = (frac > 0.0) & (frac < 1.0) & (len2 > 0.0)
    dF_dx = np.einsum("...i,...ij->...j", seg, pair.jacobian) + np.einsum("...i,...ij->...j", r, jb - ja)
    ds_dx = -dF_dx / np.where(interior, len2, 1.0)[..., None]
    dddot_ds = (np.sum(seg * w, axis=-1) + np.sum(r * (vb - va), axis=-1)) / d[..., 0]
    return np.where(interior[..., None], dddot_ds[..., None] * ds_dx, 0.0)


def ball_gradient(x, obstacle: ObstacleState, params: SafetyIndexParams):
    """Closed-form gradient for the planar ball."""
    x = np.asarray(x, dtype=float)
    r = x[..., 0:2] - obstacle.position
    v_rel = x[..., 2:4] - obstacle.velocity
    d = np.linalg.norm(r, axis=-1)[..., None]
    d_dot = np.sum(r * v_rel, axis=-1)[..., None] / d
    dp = -2.0 * r - params.k * (v_rel - d_dot * r / d) / d
    dv = -params.k * r / d
    return np.concatenate([dp, dv], axis=-1)


def grad_phi(model: RobotModel, x, obstacle: ObstacleState, params: SafetyIndexParams,
             method: str = "numeric"):
    """Gradient of ``phi`` over the state; ``method`` is "numeric" or "analytic"."""
    if method == "numeric":
        return numeric_gradient(model, x, obstacle, params)
    if method == "analytic":
        return analytic_gradient(model, x, obstacle, params)
    raise ValueError(f"unknown gradient method {method!r}")


def lie_derivatives(model: RobotModel, x, obstacle: ObstacleState, params: SafetyIndexParams,
                    method: str = "analytic") -> SafetyEvaluation:
    """``phi``, its gradient, and the drift/control parts of ``phidot``."""
    x = _check(model, x)
    pair = critical_pair(model, x, obstacle)
    return _evaluate(model, x, obstacle, params, pair, method)


def _evaluate(model, x, obstacle, params, pair, method="analytic") -> SafetyEvaluation:
    if method == "analytic":
        grad = analytic_gradient(model, x, obstacle, params, pair)
    else:
        grad = grad_phi(model, x, obstacle, params, method)
    lf = np.sum(grad * model.f(x), axis=-1)
    lg = grad @ model._g
    return SafetyEvaluation(phi(params, pair), grad, lf, lg, pair)
