"""Robot dynamics, forward kinematics and closest-point Jacobians.

Every function broadcasts over leading batch axes: a state of shape
``(..., n_x)`` yields results with the same leading shape. Four models ship:
a planar ball, a unicycle, a two-link SCARA and a spatial 4-DoF arm. All are
control-affine, ``xdot = f(x) + g u``, with a constant ``g``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple

import numpy as np


class ModelKind(str, Enum):
    BALL2D = "ball"
    UNICYCLE = "unicycle"
    SCARA = "scara"
    ARM4DOF = "arm"


class DimensionError(ValueError):
    """A state or control vector does not match the model."""


class NumericalBlowupError(FloatingPointError):
    """Integration produced non-finite values."""

    def __init__(self, message: str, state: np.ndarray):
        super().__init__(message)
        self.state = state


@dataclass(frozen=True)
class IntegratorConfig:
    control_dt: float = 0.05
    substeps: int = 10

    def __post_init__(self):
        if not self.control_dt > 0:
            raise ValueError(f"control_dt must be positive, got {self.control_dt}")
        if int(self.substeps) != self.substeps or self.substeps < 1:
            raise ValueError(f"substeps must be a positive integer, got {self.substeps}")

    @property
    def physics_dt(self) -> float:
        return self.control_dt / self.substeps


class ArcParam(NamedTuple):
    """Location of a point on the link chain: segment index plus fraction along it."""

    link: np.ndarray
    fraction: np.ndarray


@dataclass(frozen=True)
class LinkGeometry:
    """Occupied region of the robot as a chain of joint points."""

    joints: np.ndarray  # (n_segments + 1, dim)

    @property
    def segments(self) -> list[tuple[np.ndarray, np.ndarray]]:
        return [(self.joints[i], self.joints[i + 1]) for i in range(len(self.joints) - 1)]


def wrap_angle(theta):
    """Wrap angles into (-pi, pi]."""
    return math.pi - np.mod(math.pi - theta, 2.0 * math.pi)


class RobotModel:
    """Base class; subclasses fill in the dynamics and kinematics."""

    kind: ModelKind
    n_x: int
    n_u: int
    dim: int  # Cartesian dimension of the workspace the links live in
    goal_annulus: tuple[float, float] | None = None
    is_point = False  # single-point occupancy, closest point never slides

    def __init__(self):
        g = self.g()
        self._g = g
        self._actuated = np.any(g != 0.0, axis=1)

    def __repr__(self):
        return f"{type(self).__name__}()"

    @property
    def actuated(self) -> np.ndarray:
        """Boolean mask of the state rows driven by the control."""
        return self._actuated

    def f(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def g(self) -> np.ndarray:
        raise NotImplementedError

    def joints(self, x: np.ndarray) -> np.ndarray:
        """Chain points, shape ``(..., n_segments + 1, dim)``."""
        raise NotImplementedError

    def joint_jacobians(self, x: np.ndarray) -> np.ndarray:
        """d(joint position)/dx, shape ``(..., n_segments + 1, dim, n_x)``."""
        raise NotImplementedError

    def joint_velocity_jacobians(self, x: np.ndarray) -> np.ndarray:
        """d(joint velocity)/dx where joint velocity is ``J_j(x) f(x)``."""
        raise NotImplementedError

    def end_effector(self, x: np.ndarray) -> np.ndarray:
        return self.joints(x)[..., -1, :]

    def end_effector_jacobian(self, x: np.ndarray) -> np.ndarray:
        return self.joint_jacobians(x)[..., -1, :, :]

    def lift(self, point: np.ndarray) -> np.ndarray:
        """Embed planar points into the model's Cartesian space."""
        point = np.asarray(point, dtype=float)
        if point.shape[-1] == self.dim:
            return point
        pad = np.zeros(point.shape[:-1] + (self.dim - point.shape[-1],))
        return np.concatenate([point, pad], axis=-1)

    def initial_state(self, point) -> np.ndarray:
        """A resting state whose end effector sits at the planar ``point``."""
        raise NotImplementedError

    def wrap(self, x: np.ndarray) -> np.ndarray:
        return x


class Ball2D(RobotModel):
    kind = ModelKind.BALL2D
    n_x, n_u, dim = 4, 2, 2
    is_point = True

    def f(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        out[..., 0:2] = x[..., 2:4]
        return out

    def g(self):
        return np.array([[0.0, 0.0], [0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])

    def joints(self, x):
        p = np.asarray(x, dtype=float)[..., 0:2]
        return np.stack([p, p], axis=-2)

    def joint_jacobians(self, x):
        x = np.asarray(x, dtype=float)
        jac = np.zeros(x.shape[:-1] + (2, 2, 4))
        jac[..., 0, 0] = jac[..., 1, 1] = 1.0
        return jac

    def joint_velocity_jacobians(self, x):
        x = np.asarray(x, dtype=float)
        jac = np.zeros(x.shape[:-1] + (2, 2, 4))
        jac[..., 0, 2] = jac[..., 1, 3] = 1.0
        return jac

    def initial_state(self, point):
        return np.array([point[0], point[1], 0.0, 0.0], dtype=float)


class Unicycle(RobotModel):
    """State ``[c_x, c_y, v, theta]``; controls are ``[vdot, thetadot]``."""

    kind = ModelKind.UNICYCLE
    n_x, n_u, dim = 4, 2, 2
    is_point = True

    def f(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        v, th = x[..., 2], x[..., 3]
        out[..., 0] = v * np.cos(th)
        out[..., 1] = v * np.sin(th)
        return out

    def g(self):
        return np.array([[0.0, 0.0], [0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])

    def joints(self, x):
        p = np.asarray(x, dtype=float)[..., 0:2]
        return np.stack([p, p], axis=-2)

    def joint_jacobians(self, x):
        x = np.asarray(x, dtype=float)
        jac = np.zeros(x.shape[:-1] + (2, 2, 4))
        jac[..., 0, 0] = jac[..., 1, 1] = 1.0
        return jac

    def joint_velocity_jacobians(self, x):
        x = np.asarray(x, dtype=float)
        v, th = x[..., 2], x[..., 3]
        c, s = np.cos(th), np.sin(th)
        jac = np.zeros(x.shape[:-1] + (2, 2, 4))
        jac[..., 0, 2] = c[..., None]
        jac[..., 0, 3] = (-v * s)[..., None]
        jac[..., 1, 2] = s[..., None]
        jac[..., 1, 3] = (v * c)[..., None]
        return jac

    def initial_state(self, point):
        return np.array([point[0], point[1], 0.0, 0.0], dtype=float)

    def wrap(self, x):
        x = np.array(x, dtype=float, copy=True)
        x[..., 3] = wrap_angle(x[..., 3])
        return x


class _Arm(RobotModel):
    """Serial chain with joint angles and rates as state, joint accelerations as control."""

    n_joints: int
    link_lengths: np.ndarray

    def f(self, x):
        x = np.asarray(x, dtype=float)
        n = self.n_joints
        out = np.zeros_like(x)
        out[..., :n] = x[..., n:]
        return out

    def g(self):
        n = self.n_joints
        return np.vstack([np.zeros((n, n)), np.eye(n)])

    # Per-link quantities: link directions scaled by length and their partials.
    # _link_terms returns (vectors, d/dtheta, d(rate)/dtheta), shapes
    # (..., n, dim), (..., n, dim, n), (..., n, dim, n).
    def _link_terms(self, x):
        raise NotImplementedError

    def joints(self, x):
        vec, _, _ = self._link_terms(x)
        zero = np.zeros(vec.shape[:-2] + (1, self.dim))
        return np.concatenate([zero, np.cumsum(vec, axis=-2)], axis=-2)

    def _accumulate(self, per_link):
        # Joint j collects links 0..j-1; joint 0 is the fixed base.
        zero = np.zeros(per_link.shape[:-3] + (1,) + per_link.shape[-2:])
        return np.concatenate([zero, np.cumsum(per_link, axis=-3)], axis=-3)

    def joint_jacobians(self, x):
        _, dq, _ = self._link_terms(x)
        pos = self._accumulate(dq)
        vel = np.zeros(pos.shape[:-1] + (self.n_joints,))
        return np.concatenate([pos, vel], axis=-1)

    def joint_velocity_jacobians(self, x):
        _, dq, drate = self._link_terms(x)
        return np.concatenate([self._accumulate(drate), self._accumulate(dq)], axis=-1)


class Scara(_Arm):
    """Planar two-link arm; joint angles are relative, base at the origin."""

    kind = ModelKind.SCARA
    dim = 2

    def __init__(self, link_lengths=(1.0, 1.0)):
        self.link_lengths = np.asarray(link_lengths, dtype=float)
        self.n_joints = len(self.link_lengths)
        self.n_x, self.n_u = 2 * self.n_joints, self.n_joints
        reach = float(self.link_lengths.sum())
        self.goal_annulus = (0.3 * reach, 0.9 * reach)
        super().__init__()

    def __repr__(self):
        return f"Scara(link_lengths={tuple(self.link_lengths.tolist())})"

    def _link_terms(self, x):
        x = np.asarray(x, dtype=float)
        n = self.n_joints
        ang = np.cumsum(x[..., :n], axis=-1)
        rate = np.cumsum(x[..., n:], axis=-1)
        c, s = np.cos(ang), np.sin(ang)
        ell = self.link_lengths
        vec = np.stack([ell * c, ell * s], axis=-1)
        perp = np.stack([-ell * s, ell * c], axis=-1)
        # link i rotates with joint m iff m <= i
        dep = np.tril(np.ones((n, n)))
        dq = perp[..., :, :, None] * dep[:, None, :]
        drate = (-vec * rate[..., None])[..., :, :, None] * dep[:, None, :]
        return vec, dq, drate

    def initial_state(self, point):
        l1, l2 = self.link_lengths[:2]
        px, py = float(point[0]), float(point[1])
        r2 = px * px + py * py
        cos2 = np.clip((r2 - l1 * l1 - l2 * l2) / (2 * l1 * l2), -1.0, 1.0)
        t2 = math.acos(cos2)
        t1 = math.atan2(py, px) - math.atan2(l2 * math.sin(t2), l1 + l2 * math.cos(t2))
        return np.array([t1, t2, 0.0, 0.0])


def _heading(psi, pitch):
    cp, sp = np.cos(psi), np.sin(psi)
    ca, sa = np.cos(pitch), np.sin(pitch)
    e = np.stack([cp * ca, sp * ca, sa], axis=-1)
    e_psi = np.stack([-sp * ca, cp * ca, np.zeros_like(sa)], axis=-1)
    e_a = np.stack([-cp * sa, -sp * sa, ca], axis=-1)
    e_psipsi = np.stack([-cp * ca, -sp * ca, np.zeros_like(sa)], axis=-1)
    e_psia = np.stack([sp * sa, -cp * sa, np.zeros_like(sa)], axis=-1)
    e_aa = -e
    return e, e_psi, e_a, e_psipsi, e_psia, e_aa


class Arm4Dof(_Arm):
    """Spatial 4-DoF arm.

    Joint 1 yaws about the vertical axis, joints 2-4 pitch about the normal of
    the arm plane. The first link is horizontal, so at zero angles the chain is
    straight along +x.
    """

    kind = ModelKind.ARM4DOF
    dim = 3
    n_joints = 4
    n_x, n_u = 8, 4

    def __init__(self, link_lengths=(1.0, 1.0, 1.0, 1.0)):
        self.link_lengths = np.asarray(link_lengths, dtype=float)
        if len(self.link_lengths) != 4:
            raise ValueError("Arm4Dof needs exactly four link lengths")
        reach = float(self.link_lengths.sum())
        self.goal_annulus = (0.55 * reach, 0.95 * reach)
        super().__init__()

    def __repr__(self):
        return f"Arm4Dof(link_lengths={tuple(self.link_lengths.tolist())})"

    def _link_terms(self, x):
        x = np.asarray(x, dtype=float)
        q, qd = x[..., :4], x[..., 4:]
        psi, psid = q[..., 0:1], qd[..., 0:1]
        zero = np.zeros_like(psi)
        pitch = np.concatenate([zero, np.cumsum(q[..., 1:], axis=-1)], axis=-1)
        pitchd = np.concatenate([zero, np.cumsum(qd[..., 1:], axis=-1)], axis=-1)
        e, e_psi, e_a, e_pp, e_pa, e_aa = _heading(psi, pitch)
        ell = self.link_lengths[:, None]
        vec = ell * e
        # pitch of link i depends on joint m >= 1 iff m <= i; yaw moves all links
        dep = np.tril(np.ones((4, 4)))
        dep[:, 0] = 0.0
        dq = (ell * e_a)[..., :, :, None] * dep[:, None, :]
        dq[..., :, :, 0] = ell * e_psi
        rate_a = ell * (e_pa * psid[..., None] + e_aa * pitchd[..., None])
        drate = rate_a[..., :, :, None] * dep[:, None, :]
        drate[..., :, :, 0] = ell * (e_pp * psid[..., None] + e_pa * pitchd[..., None])
        return vec, dq, drate

    def initial_state(self, point):
        # Horizontal first link, then a symmetric bend (+a, -a, -a) that keeps
        # the end effector in the base plane at radial distance 2 + 2 cos(a)
        # for unit links.
        px, py = float(point[0]), float(point[1])
        l1, l2, l3, l4 = self.link_lengths
        r = math.hypot(px, py)
        span = max(l2 + l4, 1e-9)
        cos_a = np.clip((r - l1 - l3) / span, -1.0, 1.0)
        a = math.acos(cos_a)
        return np.array([math.atan2(py, px), a, -a, -a, 0.0, 0.0, 0.0, 0.0])


def make_model(kind: str | ModelKind) -> RobotModel:
    kind = ModelKind(kind)
    return {
        ModelKind.BALL2D: Ball2D,
        ModelKind.UNICYCLE: Unicycle,
        ModelKind.SCARA: Scara,
        ModelKind.ARM4DOF: Arm4Dof,
    }[kind]()


def _check(model: RobotModel, x, u=None):
    x = np.asarray(x, dtype=float)
    if x.shape[-1:] != (model.n_x,):
        raise DimensionError(f"{model.kind.value} state needs {model.n_x} entries, got shape {x.shape}")
    if u is None:
        return x
    u = np.asarray(u, dtype=float)
    if u.shape[-1:] != (model.n_u,):
        raise DimensionError(f"{model.kind.value} control needs {model.n_u} entries, got shape {u.shape}")
    return x, u


def eval_dynamics(model: RobotModel, x, u) -> np.ndarray:
    """Return ``f(x) + g u``."""
    x, u = _check(model, x, u)
    return model.f(x) + u @ model._g.T


def integrate(model: RobotModel, x, u, cfg: IntegratorConfig) -> np.ndarray:
    """Advance without the finiteness check; used by batch simulation."""
    act = model.actuated
    dt = cfg.physics_dt
    gu = u @ model._g.T
    for _ in range(cfg.substeps):
        x_act = x + dt * gu
        # Drift rows see the actuated rows at the substep midpoint, which makes
        # the update exact for double integrators under constant control.
        rates = model.f(np.where(act, 0.5 * (x + x_act), x))
        x = model.wrap(np.where(act, x_act, x + dt * rates))
    return x


def step(model: RobotModel, x, u, cfg: IntegratorConfig | None = None) -> np.ndarray:
    """Advance ``x`` one control period holding ``u`` constant."""
    cfg = cfg or IntegratorConfig()
    x, u = _check(model, x, u)
    with np.errstate(over="ignore", invalid="ignore"):  # reported below as a blowup
        out = integrate(model, x, u, cfg)
    if not np.all(np.isfinite(out)):
        raise NumericalBlowupError("integration produced non-finite state", out)
    return out


def link_geometry(model: RobotModel, x) -> LinkGeometry:
    x = _check(model, x)
    return LinkGeometry(model.joints(x))


def closest_on_chain(joints: np.ndarray, point: np.ndarray):
    """Closest point on a polyline to ``point``; returns (point, ArcParam, distance)."""
    a = joints[..., :-1, :]
    ab = joints[..., 1:, :] - a
    ap = point[..., None, :] - a
    len2 = np.sum(ab * ab, axis=-1)
    t = np.sum(ap * ab, axis=-1) / np.where(len2 > 0, len2, 1.0)
    t = np.where(len2 > 0, np.clip(t, 0.0, 1.0), 0.0)
    cand = a + t[..., None] * ab
    dist2 = np.sum((cand - point[..., None, :]) ** 2, axis=-1)
    link = np.argmin(dist2, axis=-1)
    frac = np.take_along_axis(t, link[..., None], axis=-1)[..., 0]
    c_r = np.take_along_axis(cand, link[..., None, None], axis=-2)[..., 0, :]
    dist = np.sqrt(np.take_along_axis(dist2, link[..., None], axis=-1)[..., 0])
    return c_r, ArcParam(link, frac), dist


def critical_point(model: RobotModel, x, obstacle_center):
    """Closest point on the robot to ``obstacle_center`` and where it sits on the chain."""
    x = _check(model, x)
    c_r, arc, _ = closest_on_chain(model.joints(x), model.lift(obstacle_center))
    return c_r, arc


def _interpolate_joints(per_joint: np.ndarray, arc: ArcParam) -> np.ndarray:
    link = np.asarray(arc.link)
    frac = np.asarray(arc.fraction, dtype=float)
    idx = link[..., None, None, None]
    start = np.take_along_axis(per_joint, idx, axis=-3)[..., 0, :, :]
    end = np.take_along_axis(per_joint, idx + 1, axis=-3)[..., 0, :, :]
    return (1.0 - frac)[..., None, None] * start + frac[..., None, None] * end


def point_on_chain(model: RobotModel, x, arc: ArcParam) -> np.ndarray:
    """Position of the chain point at a fixed ``arc`` location."""
    x = _check(model, x)
    joints = model.joints(x)
    link = np.asarray(arc.link)
    frac = np.asarray(arc.fraction, dtype=float)[..., None]
    start = np.take_along_axis(joints, link[..., None, None], axis=-2)[..., 0, :]
    end = np.take_along_axis(joints, link[..., None, None] + 1, axis=-2)[..., 0, :]
    return (1.0 - frac) * start + frac * end


def critical_jacobian(model: RobotModel, x, arc: ArcParam) -> np.ndarray:
    """d c_r / dx with the arc location held fixed, shape ``(..., dim, n_x)``."""
    x = _check(model, x)
    return _interpolate_joints(model.joint_jacobians(x), arc)


def critical_velocity_jacobian(model: RobotModel, x, arc: ArcParam) -> np.ndarray:
    """d(J_cr f)/dx with the arc location held fixed."""
    x = _check(model, x)
    return _interpolate_joints(model.joint_velocity_jacobians(x), arc)
