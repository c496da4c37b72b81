"""Energy-function safe controllers.

Each algorithm is available twice: :func:`unified_control` builds the safe
input as ``alpha * Lg^T + u0_e`` from the decomposition of ``u0`` along
``Lg``, and the ``direct_*`` functions implement each law in its native form.
The two must agree; the test suite holds them to that.

All functions broadcast over leading batch axes.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .dynamics import ModelKind, RobotModel, _check, wrap_angle
from .safety_index import SafetyEvaluation, SafetyIndexParams

# Below this norm, Lg phi is treated as zero: no input direction moves phidot.
DEGENERATE_TOL = 1e-12


class Algorithm(str, Enum):
    PFM = "pfm"
    SMA = "sma"
    SSA = "ssa"
    BFM = "bfm"
    SSS = "sss"


# Name of the per-algorithm tuning parameter, matching the CLI flags.
PARAMETER_NAME = {
    Algorithm.PFM: "c1",
    Algorithm.SMA: "c2",
    Algorithm.SSA: "eta",
    Algorithm.BFM: "lambda",
    Algorithm.SSS: "lambda",
}

ALGORITHM_IDS = {alg: i for i, alg in enumerate(Algorithm)}


class DegenerateConstraintError(ValueError):
    """``Lg phi`` vanishes, so the half-space constraint has no normal."""


class InsufficientGainWarning(UserWarning):
    """SMA correction left the predicted ``phidot`` positive."""


@dataclass(frozen=True)
class ControllerConfig:
    algorithm: Algorithm
    safety: SafetyIndexParams = field(default_factory=lambda: SafetyIndexParams(1.5, 1.0))
    c1: float = 3.0
    c2: float = 3.0
    eta: float = -1.0
    lam: float = -1.0

    def __post_init__(self):
        object.__setattr__(self, "algorithm", Algorithm(self.algorithm))
        if not self.c1 > 0:
            raise ValueError(f"c1 must be positive, got {self.c1}")
        if not self.c2 > 0:
            raise ValueError(f"c2 must be positive, got {self.c2}")
        # eta = 0 is admitted: the boundary-tracking SSA variant
        if not self.eta <= 0:
            raise ValueError(f"eta must be non-positive, got {self.eta}")
        if not self.lam < 0:
            raise ValueError(f"lambda must be negative, got {self.lam}")

    @property
    def parameter_name(self) -> str:
        return PARAMETER_NAME[self.algorithm]

    @property
    def parameter_value(self) -> float:
        return {"c1": self.c1, "c2": self.c2, "eta": self.eta, "lambda": self.lam}[self.parameter_name]

    def with_parameter(self, value: float) -> ControllerConfig:
        attr = {"c1": "c1", "c2": "c2", "eta": "eta", "lambda": "lam"}[self.parameter_name]
        return replace(self, **{attr: value})


@dataclass(frozen=True)
class Decomposition:
    u0_s: np.ndarray
    u0_e: np.ndarray
    mu: np.ndarray
    gamma: np.ndarray
    ind_a: np.ndarray
    ind_b: np.ndarray
    alpha: np.ndarray
    beta: float = 0.0


@dataclass(frozen=True)
class Diagnostics:
    phi: np.ndarray
    lf_phi: np.ndarray
    lg_phi_norm: np.ndarray
    predicted_phi_dot: np.ndarray
    degenerate_flag: np.ndarray


@dataclass(frozen=True)
class SafeControlOutput:
    u: np.ndarray
    intervened: np.ndarray
    decomposition: Decomposition | None
    diagnostics: Diagnostics


def _dot(a, b):
    return np.sum(a * b, axis=-1)


def _norm2(lg):
    return _dot(lg, lg)


def _degenerate(norm2):
    return norm2 <= DEGENERATE_TOL**2


def decompose(u0, lg_phi):
    """Split ``u0`` into its component along ``Lg^T`` and the orthogonal rest.

    Returns ``(u0_s, u0_e, mu)``. Where ``Lg`` vanishes, ``mu`` is NaN and the
    whole reference lands in ``u0_e``.
    """
    u0 = np.asarray(u0, dtype=float)
    lg = np.asarray(lg_phi, dtype=float)
    n2 = _norm2(lg)
    degen = _degenerate(n2)
    mu = np.where(degen, np.nan, _dot(lg, u0) / np.where(degen, 1.0, n2))
    u0_s = np.where(degen[..., None], 0.0, np.nan_to_num(mu)[..., None] * lg)
    return u0_s, u0 - u0_s, mu


def _gamma(xi, lf_phi, n2):
    degen = _degenerate(n2)
    return np.where(degen, np.nan, (xi - lf_phi) / np.where(degen, 1.0, n2))


def gamma(xi, lf_phi, lg_phi):
    """Largest multiple of ``Lg^T`` that keeps ``phidot <= xi``."""
    n2 = _norm2(np.asarray(lg_phi, dtype=float))
    if np.any(_degenerate(n2)):
        raise DegenerateConstraintError("Lg phi is zero; the constraint cannot be shaped by the input")
    return _gamma(xi, lf_phi, n2)


def _diagnostics(ev: SafetyEvaluation, u, degen):
    lg = np.asarray(ev.lg_phi, dtype=float)
    return Diagnostics(
        phi=ev.phi,
        lf_phi=ev.lf_phi,
        lg_phi_norm=np.sqrt(_norm2(lg)),
        predicted_phi_dot=ev.lf_phi + _dot(lg, u),
        degenerate_flag=degen,
    )


def slack(cfg: ControllerConfig, phi):
    """The bound ``xi`` on ``phidot`` used by the projection-type laws."""
    if cfg.algorithm is Algorithm.SSA:
        return np.full_like(np.asarray(phi, dtype=float), cfg.eta)
    if cfg.algorithm in (Algorithm.BFM, Algorithm.SSS):
        return cfg.lam * np.asarray(phi, dtype=float)
    raise ValueError(f"{cfg.algorithm.value} has no slack term")


def unified_control(cfg: ControllerConfig, u0, ev: SafetyEvaluation) -> SafeControlOutput:
    """Safe control as ``alpha * Lg^T + u0_e`` with the algorithm's ``alpha``."""
    u0 = np.asarray(u0, dtype=float)
    lg = np.asarray(ev.lg_phi, dtype=float)
    phi = np.asarray(ev.phi, dtype=float)
    n2 = _norm2(lg)
    degen = _degenerate(n2)
    u0_s, u0_e, mu = decompose(u0, lg)
    ind_b = (phi >= 0).astype(float)
    alg = cfg.algorithm

    if alg in (Algorithm.PFM, Algorithm.SMA):
        gain = cfg.c1 if alg is Algorithm.PFM else cfg.c2
        gam = np.full_like(phi, np.nan)
        ind_a = np.zeros_like(phi)
        alpha = mu - ind_b * gain
        active = ind_b > 0
    else:
        gam = _gamma(slack(cfg, phi), ev.lf_phi, n2)
        ind_a = (mu > gam).astype(float)
        if alg is Algorithm.BFM:
            alpha = (1.0 - ind_a) * mu + ind_a * gam
            active = ind_a > 0
        else:
            alpha = (1.0 - ind_a * ind_b) * mu + ind_a * ind_b * gam
            active = ind_a * ind_b > 0

    active = active & ~degen
    # Outside the active branch alpha == mu and the sum reproduces u0; return
    # u0 itself there so that "no intervention" is exact.
    u = np.where(active[..., None], alpha[..., None] * lg + u0_e, u0)
    decomposition = Decomposition(u0_s, u0_e, mu, gam, ind_a, ind_b, alpha)
    return SafeControlOutput(u, active, decomposition, _diagnostics(ev, u, degen))


def _gradient_step(u0, ev: SafetyEvaluation, gain):
    u0 = np.asarray(u0, dtype=float)
    lg = np.asarray(ev.lg_phi, dtype=float)
    degen = _degenerate(_norm2(lg))
    active = (np.asarray(ev.phi) >= 0) & ~degen
    u = np.where(active[..., None], u0 - gain * lg, u0)
    return SafeControlOutput(u, active, None, _diagnostics(ev, u, degen))


def direct_pfm(cfg: ControllerConfig, u0, ev: SafetyEvaluation) -> SafeControlOutput:
    """Potential-field repulsion mapped to configuration space with a unit gradient step."""
    return _gradient_step(u0, ev, cfg.c1)


def direct_sma(cfg: ControllerConfig, u0, ev: SafetyEvaluation) -> SafeControlOutput:
    out = _gradient_step(u0, ev, cfg.c2)
    if np.any(out.intervened & (out.diagnostics.predicted_phi_dot > 0)):
        warnings.warn(
            f"c2={cfg.c2} leaves phidot positive; raise the gain", InsufficientGainWarning, stacklevel=2
        )
    return out


def direct_projection(u0, ev: SafetyEvaluation, xi, gate_on_phi: bool) -> SafeControlOutput:
    """Minimum-norm change of ``u0`` satisfying ``Lf + Lg u <= xi``.

    With ``gate_on_phi`` the constraint only applies where ``phi >= 0``.
    """
    u0 = np.asarray(u0, dtype=float)
    lg = np.asarray(ev.lg_phi, dtype=float)
    n2 = _norm2(lg)
    degen = _degenerate(n2)
    excess = ev.lf_phi + _dot(lg, u0) - xi
    active = (excess > 0) & ~degen
    if gate_on_phi:
        active &= np.asarray(ev.phi) >= 0
    step = excess / np.where(degen, 1.0, n2)
    u = np.where(active[..., None], u0 - step[..., None] * lg, u0)
    return SafeControlOutput(u, active, None, _diagnostics(ev, u, degen))


def direct_control(cfg: ControllerConfig, u0, ev: SafetyEvaluation) -> SafeControlOutput:
    alg = cfg.algorithm
    if alg is Algorithm.PFM:
        return direct_pfm(cfg, u0, ev)
    if alg is Algorithm.SMA:
        return direct_sma(cfg, u0, ev)
    xi = slack(cfg, ev.phi)
    return direct_projection(u0, ev, xi, gate_on_phi=alg is not Algorithm.BFM)


@dataclass(frozen=True)
class ReferenceGains:
    kp: float = 4.0
    kd: float = 4.0
    u_max: float = 5.0
    k_theta: float = 3.0
    joint_damping: float = 1.0


def _clamp(u, u_max):
    norm = np.linalg.norm(u, axis=-1, keepdims=True)
    return np.where(norm > u_max, u * (u_max / np.where(norm > 0, norm, 1.0)), u)


def reference_controller(model: RobotModel, x, goal, gains: ReferenceGains | None = None):
    """Nominal goal-reaching acceleration, ignoring obstacles."""
    gains = gains or ReferenceGains()
    x = _check(model, x)
    goal = model.lift(np.asarray(goal, dtype=float))

    if model.kind is ModelKind.UNICYCLE:
        delta = goal - x[..., 0:2]
        dist = np.linalg.norm(delta, axis=-1)
        heading_err = wrap_angle(np.arctan2(delta[..., 1], delta[..., 0]) - x[..., 3])
        heading_err = np.where(dist > 0, heading_err, 0.0)
        vdot = gains.kp * dist * np.cos(heading_err) - gains.kd * x[..., 2]
        u = np.stack([vdot, gains.k_theta * heading_err], axis=-1)
        return _clamp(u, gains.u_max)

    jac = model.end_effector_jacobian(x)
    ee = model.end_effector(x)
    ee_vel = np.einsum("...ij,...j->...i", jac, model.f(x))
    accel = gains.kp * (goal - ee) - gains.kd * ee_vel
    if model.is_point:
        return _clamp(accel, gains.u_max)
    n = model.n_u
    u = np.einsum("...ji,...j->...i", jac[..., :, :n], accel) - gains.joint_damping * x[..., n:]
    return _clamp(u, gains.u_max)

