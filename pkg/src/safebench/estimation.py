"""Linear Kalman filtering for the robot and the human.

Beliefs broadcast over leading batch axes: ``mean`` is ``(..., n)`` and
``covariance`` is ``(..., n, n)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import ModelKind, RobotModel


class EstimationError(ArithmeticError):
    """The innovation covariance could not be inverted."""


@dataclass(frozen=True)
class GaussianBelief:
    mean: np.ndarray
    covariance: np.ndarray


@dataclass(frozen=True)
class KalmanConfig:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    Q: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        A, B, C, Q, R = (np.atleast_2d(np.asarray(m, dtype=float)) for m in (self.A, self.B, self.C, self.Q, self.R))
        n = A.shape[0]
        if A.shape != (n, n) or B.shape[0] != n or C.shape[1] != n or Q.shape != (n, n):
            raise ValueError("inconsistent Kalman filter dimensions")
        if R.shape != (C.shape[0], C.shape[0]):
            raise ValueError("R must match the measurement dimension")
        for name, m in (("Q", Q), ("R", R)):
            if not np.allclose(m, m.T) or np.linalg.eigvalsh(m).min() < -1e-12:
                raise ValueError(f"{name} must be symmetric positive semidefinite")
        if np.linalg.matrix_rank(R) < R.shape[0]:
            raise ValueError("R must be invertible")
        for name, m in zip("ABCQR", (A, B, C, Q, R)):
            object.__setattr__(self, name, m)


def _apply(M, v):
    """``M @ v`` for each row of ``v``.

    A stacked product runs one small BLAS call per row, so a row's result does
    not depend on how many rows share the call; ``v @ M.T`` would.
    """
    v = np.asarray(v, dtype=float)
    return (M @ v[..., None])[..., 0]


def kf_predict(cfg: KalmanConfig, belief: GaussianBelief, u=None) -> GaussianBelief:
    mean = _apply(cfg.A, belief.mean)
    if u is not None:
        mean = mean + _apply(cfg.B, u)
    cov = cfg.A @ belief.covariance @ cfg.A.T + cfg.Q
    return GaussianBelief(mean, cov)


def kf_update(cfg: KalmanConfig, belief: GaussianBelief, z) -> GaussianBelief:
    """Measurement update with the Joseph-form covariance."""
    P = belief.covariance
    C = cfg.C
    innovation = np.asarray(z, dtype=float) - _apply(C, belief.mean)
    S = C @ P @ C.T + cfg.R
    PCt = P @ C.T
    try:
        # K = P C^T S^-1, solved as S^T K^T = (P C^T)^T
        K = np.swapaxes(np.linalg.solve(np.swapaxes(S, -1, -2), np.swapaxes(PCt, -1, -2)), -1, -2)
    except np.linalg.LinAlgError as exc:
        raise EstimationError("innovation covariance is singular") from exc
    mean = belief.mean + np.einsum("...ij,...j->...i", K, innovation)
    I_KC = np.eye(P.shape[-1]) - K @ C
    cov = I_KC @ P @ np.swapaxes(I_KC, -1, -2) + K @ cfg.R @ np.swapaxes(K, -1, -2)
    return GaussianBelief(mean, 0.5 * (cov + np.swapaxes(cov, -1, -2)))


@dataclass(frozen=True)
class EstimationConfig:
    perfect_sensing: bool = False
    noise_sigma: float = 0.01  # position measurement noise, m (rad for arm joints)
    robot_accel_sigma: float = 0.05
    human_accel_sigma: float = 2.0

    def __post_init__(self):
        if self.noise_sigma <= 0 and not self.perfect_sensing:
            raise ValueError("noise_sigma must be positive unless sensing is perfect")


def double_integrator(n_dof: int, dt: float, meas_sigma: float, accel_sigma: float) -> KalmanConfig:
    """Constant-acceleration-per-frame model on ``[q, qdot]`` observing ``q``."""
    eye = np.eye(n_dof)
    zero = np.zeros((n_dof, n_dof))
    A = np.block([[eye, dt * eye], [zero, eye]])
    G = np.vstack([0.5 * dt * dt * eye, dt * eye])
    C = np.hstack([eye, zero])
    Q = accel_sigma**2 * G @ G.T
    return KalmanConfig(A, G, C, Q, meas_sigma**2 * eye)


def odometry_position(dt: float, meas_sigma: float, accel_sigma: float) -> KalmanConfig:
    """Planar position driven by a known velocity input."""
    eye = np.eye(2)
    return KalmanConfig(eye, dt * eye, eye, (accel_sigma * dt * dt) ** 2 * eye, meas_sigma**2 * eye)


def robot_filter(model: RobotModel, dt: float, cfg: EstimationConfig) -> KalmanConfig:
    if model.kind is ModelKind.UNICYCLE:
        return odometry_position(dt, cfg.noise_sigma, cfg.robot_accel_sigma)
    return double_integrator(model.n_u, dt, cfg.noise_sigma, cfg.robot_accel_sigma)


def human_filter(dt: float, cfg: EstimationConfig) -> KalmanConfig:
    cv = double_integrator(2, dt, cfg.noise_sigma, cfg.human_accel_sigma)
    return KalmanConfig(cv.A, np.zeros((4, 1)), cv.C, cv.Q, cv.R)


class BatchEstimator:
    """Per-episode filters for a batch of episodes run in lockstep.

    Measurement noise is drawn up front from each episode's own generator, so
    results do not depend on how episodes are grouped into batches.
    """

    def __init__(self, model: RobotModel, dt: float, cfg: EstimationConfig,
                 robot0: np.ndarray, human0: np.ndarray, rngs, n_frames: int):
        self.model = model
        self.cfg = cfg
        self.dt = dt
        if cfg.perfect_sensing:
            return
        self.robot_kf = robot_filter(model, dt, cfg)
        self.human_kf = human_filter(dt, cfg)
        p_r = self.robot_kf.C.shape[0]
        noise = np.stack([rng.normal(0.0, cfg.noise_sigma, size=(n_frames, p_r + 2)) for rng in rngs], axis=1)
        self._robot_noise = noise[..., :p_r]
        self._human_noise = noise[..., p_r:]
        batch = robot0.shape[0]
        n_r = self.robot_kf.A.shape[0]
        r_mean = robot0[:, :n_r] if model.kind is ModelKind.UNICYCLE else robot0.copy()
        r_cov = np.diag(np.r_[np.full(p_r, cfg.noise_sigma**2), np.full(n_r - p_r, 1e-4)])
        self.robot = GaussianBelief(r_mean, np.broadcast_to(r_cov, (batch, n_r, n_r)).copy())
        h_cov = np.diag([cfg.noise_sigma**2] * 2 + [1e-2] * 2)
        self.human = GaussianBelief(human0.copy(), np.broadcast_to(h_cov, (batch, 4, 4)).copy())

    def observe(self, frame: int, robot_true: np.ndarray, human_true: np.ndarray):
        """Fuse this frame's measurements; returns estimated (robot, human) states."""
        if self.cfg.perfect_sensing:
            return robot_true, human_true
        C = self.robot_kf.C
        z_r = _apply(C, robot_true[:, : C.shape[1]]) + self._robot_noise[frame]
        z_h = human_true[:, :2] + self._human_noise[frame]
        self.robot = kf_update(self.robot_kf, self.robot, z_r)
        self.human = kf_update(self.human_kf, self.human, z_h)
        return self._robot_state(robot_true), self.human.mean

    def _robot_state(self, robot_true):
        if self.model.kind is ModelKind.UNICYCLE:
            # speed and heading come from integrating the robot's own commands
            return np.concatenate([self.robot.mean, robot_true[:, 2:]], axis=-1)
        return self.robot.mean

    def advance(self, robot_est: np.ndarray, u: np.ndarray):
        """Time update with the commands applied over the coming frame."""
        if self.cfg.perfect_sensing:
            return
        if self.model.kind is ModelKind.UNICYCLE:
            v_mid = robot_est[:, 2] + 0.5 * self.dt * u[:, 0]
            th_mid = robot_est[:, 3] + 0.5 * self.dt * u[:, 1]
            vel = np.stack([v_mid * np.cos(th_mid), v_mid * np.sin(th_mid)], axis=-1)
            self.robot = kf_predict(self.robot_kf, self.robot, vel)
        else:
            self.robot = kf_predict(self.robot_kf, self.robot, u)
        self.human = kf_predict(self.human_kf, self.human)
