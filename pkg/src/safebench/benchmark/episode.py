"""The episode loop: sense, filter, step both agents, book goals and collisions.

:func:`simulate` runs a batch of scenarios in lockstep under one controller
configuration. Every episode draws its noise from its own seeded generator,
so a batch gives the same logs as running its members one at a time.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..controllers import (
    ALGORITHM_IDS,
    Algorithm,
    ControllerConfig,
    ReferenceGains,
    reference_controller,
    slack,
    unified_control,
)
from ..dynamics import Ball2D, IntegratorConfig, ModelKind, RobotModel, integrate
from ..estimation import BatchEstimator, EstimationConfig
from ..safety_index import (
    ObstacleState,
    SafetyEvaluation,
    SafetyIndexParams,
    _evaluate,
    _pair,
)
from .humans import GOAL_RADIUS, HumanKind, HumanModel, goal_seeking_control, human_noise, preroll, repulsion
from .scenarios import Scenario

COLLISION_DISTANCE = 0.25
BASELINE_ID = len(ALGORITHM_IDS)  # generator key of the unfiltered reference
SENSOR_STREAM = 1
HUMAN_STREAM = 2
_BALL = Ball2D()


@dataclass(frozen=True)
class EpisodeSettings:
    substeps: int = 10
    goal_radius: float = GOAL_RADIUS
    collision_distance: float = COLLISION_DISTANCE
    gains: ReferenceGains = field(default_factory=ReferenceGains)


@dataclass(frozen=True)
class Event:
    kind: str  # "goal" or "collision"
    agent: str  # "robot" or "human"
    index: int  # goal index; 0 for collisions
    t: float


@dataclass
class EpisodeLog:
    """Per-frame record of one episode; frame ``i`` is time ``t[i]``.

    States are logged at the start of each frame, together with what the
    controller saw and did during it. ``phi`` and the Lie derivatives come
    from the estimated states; ``d`` and ``d_dot`` are ground truth.
    """

    scenario_seed: int
    algorithm: str
    params: dict
    human_kind: str
    t: np.ndarray
    robot_state: np.ndarray
    human_state: np.ndarray
    u0: np.ndarray
    u: np.ndarray
    phi: np.ndarray
    lf_phi: np.ndarray
    lg_phi: np.ndarray
    xi: np.ndarray
    predicted_phi_dot: np.ndarray
    d: np.ndarray
    d_dot: np.ndarray
    intervened: np.ndarray
    degenerate: np.ndarray
    frozen: np.ndarray
    events: list[Event]
    valid: bool = True
    error: str | None = None

    @property
    def n_frames(self) -> int:
        return len(self.t)

    @property
    def collided(self) -> bool:
        return any(e.kind == "collision" for e in self.events)

    def goal_events(self, agent: str) -> list[Event]:
        return [e for e in self.events if e.kind == "goal" and e.agent == agent]

    def frames(self):
        """Yield one JSON-ready dict per frame."""
        for i in range(self.n_frames):
            yield {
                "t": float(self.t[i]),
                "robot_state": self.robot_state[i].tolist(),
                "human_state": self.human_state[i].tolist(),
                "u0": self.u0[i].tolist(),
                "u": self.u[i].tolist(),
                "phi": _json_float(self.phi[i]),
                "d": float(self.d[i]),
                "d_dot": float(self.d_dot[i]),
                "intervened": bool(self.intervened[i]),
                "degenerate": bool(self.degenerate[i]),
            }


def _json_float(v):
    v = float(v)
    return v if np.isfinite(v) else None


def episode_rng(seed: int, algorithm_id: int, param_index: int, stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), algorithm_id, param_index, stream]))


def human_rng(seed: int) -> np.random.Generator:
    # Keyed on the scenario alone so every controller faces the same human.
    return np.random.default_rng(np.random.SeedSequence([int(seed), HUMAN_STREAM]))


def at_rest(model: RobotModel, x: np.ndarray) -> np.ndarray:
    """Zero the velocity coordinates of ``x``."""
    x = np.array(x, dtype=float, copy=True)
    if model.kind is ModelKind.UNICYCLE:
        x[..., 2] = 0.0
    else:
        x[..., model.n_x // 2:] = 0.0
    return x


def default_human(model: RobotModel, kind: HumanKind | str = HumanKind.PASSIVE, **overrides) -> HumanModel:
    """Human agent for ``model``; arm bases get a keep-out disc so the human never walks through them."""
    keep_out = None
    if model.goal_annulus is not None:
        keep_out = (0.0, 0.0, model.goal_annulus[0])
    overrides.setdefault("keep_out", keep_out)
    return HumanModel(kind=HumanKind(kind), **overrides)


_PREROLL_CACHE: dict = {}


def _human_preroll(human: HumanModel, scenarios: list[Scenario], integrator: IntegratorConfig,
                   goal_radius: float, n_frames: int):
    key = (human, integrator, goal_radius, n_frames,
           tuple((s.seed, s.human_goals.tobytes()) for s in scenarios))
    hit = _PREROLL_CACHE.get(key)
    if hit is None:
        noise = np.stack([human_noise(human, human_rng(s.seed), n_frames) for s in scenarios])
        starts = np.stack([s.human_goals[0] for s in scenarios])
        goals = np.stack([s.human_goals for s in scenarios])
        hit = preroll(human, starts, goals, noise, integrator, goal_radius)
        if len(_PREROLL_CACHE) > 64:
            _PREROLL_CACHE.clear()
        _PREROLL_CACHE[key] = hit
    return hit


def _controller_params(cfg: ControllerConfig | None) -> dict:
    if cfg is None:
        return {}
    return {"dmin": cfg.safety.d_min, "k": cfg.safety.k, cfg.parameter_name: cfg.parameter_value}


def simulate(model: RobotModel, cfg: ControllerConfig | None, scenarios: list[Scenario],
             human: HumanModel | None = None, estimation: EstimationConfig | None = None,
             param_index: int = 0, settings: EpisodeSettings | None = None,
             safety: SafetyIndexParams | None = None) -> list[EpisodeLog]:
    """Run every scenario under one controller and return their logs.

    ``cfg=None`` runs the unfiltered reference controller. ``safety`` sets
    the index used for logging in that case; otherwise ``cfg.safety`` is used.
    Blown-up episodes are marked invalid rather than raising.
    """
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        return _simulate(model, cfg, scenarios, human, estimation, param_index, settings, safety)


def _simulate(model, cfg, scenarios, human, estimation, param_index, settings, safety):
    if not scenarios:
        raise ValueError("no scenarios to simulate")
    human = human or default_human(model)
    estimation = estimation or EstimationConfig()
    settings = settings or EpisodeSettings()
    n_frames = scenarios[0].n_frames
    fps = scenarios[0].fps
    if any(s.n_frames != n_frames or s.fps != fps for s in scenarios):
        raise ValueError("all scenarios in a batch must share duration and fps")
    integrator = IntegratorConfig(1.0 / fps, settings.substeps)
    dt = integrator.control_dt
    params = cfg.safety if cfg is not None else (safety or SafetyIndexParams(1.5, 1.0))
    alg_id = ALGORITHM_IDS[cfg.algorithm] if cfg is not None else BASELINE_ID
    batch = len(scenarios)
    rows = np.arange(batch)

    robot_goals = model.lift(np.stack([s.robot_goals for s in scenarios]))
    human_goals = np.stack([s.human_goals for s in scenarios])
    last_robot_goal = robot_goals.shape[1] - 1
    last_human_goal = human_goals.shape[1] - 1
    x = np.stack([model.initial_state(s.robot_goals[0]) for s in scenarios])
    h = np.zeros((batch, 4))
    h[:, :2] = human_goals[:, 0]

    passive = None
    noise_h = None
    if human.kind is HumanKind.PASSIVE:
        passive = _human_preroll(human, scenarios, integrator, settings.goal_radius, n_frames)
    elif human.kind is not HumanKind.STATIC:
        noise_h = np.stack([human_noise(human, human_rng(s.seed), n_frames) for s in scenarios])

    sensors = [episode_rng(s.seed, alg_id, param_index, SENSOR_STREAM) for s in scenarios]
    estimator = BatchEstimator(model, dt, estimation, x, h, sensors, n_frames)

    def buf(*shape, fill=np.nan, dtype=float):
        return np.full((batch, n_frames) + shape, fill, dtype=dtype)

    log = {
        "robot_state": buf(model.n_x), "human_state": buf(4), "u0": buf(model.n_u), "u": buf(model.n_u),
        "phi": buf(), "lf_phi": buf(), "lg_phi": buf(model.n_u), "xi": buf(), "predicted_phi_dot": buf(),
        "d": buf(), "d_dot": buf(),
        "intervened": buf(fill=False, dtype=bool), "degenerate": buf(fill=False, dtype=bool),
        "frozen": buf(fill=False, dtype=bool),
    }
    events: list[list[Event]] = [[] for _ in range(batch)]
    robot_idx = np.ones(batch, dtype=int)
    human_idx = np.ones(batch, dtype=int)
    frozen = np.zeros(batch, dtype=bool)
    valid = np.ones(batch, dtype=bool)
    errors: list[str | None] = [None] * batch

    for f in range(n_frames):
        t = f * dt
        if passive is not None:
            h = passive.states[:, f]
        truth = _pair(model, x, ObstacleState(h[:, :2], h[:, 2:]))
        hit = (truth.d < settings.collision_distance) & ~frozen
        for i in np.flatnonzero(hit):
            events[i].append(Event("collision", "robot", 0, t))
        frozen |= hit
        x = np.where(frozen[:, None], at_rest(model, x), x)

        x_hat, h_hat = estimator.observe(f, x, h)
        ev, blind = _safety(model, x_hat, h_hat, params)
        goal = robot_goals[rows, np.minimum(robot_idx, last_robot_goal)]
        u0 = reference_controller(model, x_hat, goal, settings.gains)
        if cfg is None:
            u = u0
            active = np.zeros(batch, dtype=bool)
            xi = np.full(batch, np.nan)
        else:
            out = unified_control(cfg, u0, ev)
            u, active = out.u, out.intervened
            xi = slack(cfg, ev.phi) if cfg.algorithm not in (Algorithm.PFM, Algorithm.SMA) else np.full(batch, np.nan)
        lg_norm2 = np.sum(ev.lg_phi * ev.lg_phi, axis=-1)
        u = np.where(frozen[:, None], 0.0, u)
        active = active & ~frozen

        log["robot_state"][:, f] = x
        log["human_state"][:, f] = h
        log["u0"][:, f] = u0
        log["u"][:, f] = u
        awake = ~frozen
        log["phi"][awake, f] = np.where(blind, np.nan, ev.phi)[awake]
        log["lf_phi"][awake, f] = ev.lf_phi[awake]
        log["lg_phi"][awake, f] = ev.lg_phi[awake]
        log["xi"][awake, f] = xi[awake]
        log["predicted_phi_dot"][awake, f] = (ev.lf_phi + np.sum(ev.lg_phi * u, axis=-1))[awake]
        log["d"][:, f] = truth.d
        log["d_dot"][:, f] = truth.d_dot
        log["intervened"][:, f] = active
        log["degenerate"][:, f] = (lg_norm2 <= 1e-24) & awake
        log["frozen"][:, f] = frozen

        # advance both agents one control period
        estimator.advance(x_hat, u)
        x_next = integrate(model, x, u, integrator)
        x_next = np.where(frozen[:, None], x, x_next)
        if passive is not None:
            h_next = passive.states[:, f + 1]
        elif human.kind is HumanKind.STATIC:
            h_next = h
        else:
            h_goal = human_goals[rows, np.minimum(human_idx, last_human_goal)]
            a_h = goal_seeking_control(human, h, h_goal, noise_h[:, f])
            if human.kind is HumanKind.INTERACTIVE:
                a_h = a_h + repulsion(human, h[:, :2], truth.c_r[:, :2])
            h_next = integrate(_BALL, h, a_h, integrator)

        bad = ~np.all(np.isfinite(x_next), axis=-1) & valid
        for i in np.flatnonzero(bad):
            errors[i] = f"non-finite robot state at t={t + dt:.3f}"
        valid &= ~bad
        frozen |= bad
        x = np.where(bad[:, None], at_rest(model, x), x_next)

        t_next = t + dt
        reached = ~frozen & (robot_idx <= last_robot_goal) & (
            np.linalg.norm(model.end_effector(x) - goal, axis=-1) < settings.goal_radius)
        for i in np.flatnonzero(reached):
            events[i].append(Event("goal", "robot", int(robot_idx[i]), t_next))
        robot_idx += reached

        h_goal = human_goals[rows, np.minimum(human_idx, last_human_goal)]
        h_reached = (human_idx <= last_human_goal) & (
            np.linalg.norm(h_next[:, :2] - h_goal, axis=-1) < settings.goal_radius)
        if human.kind is HumanKind.STATIC:
            h_reached[:] = False
        for i in np.flatnonzero(h_reached):
            events[i].append(Event("goal", "human", int(human_idx[i]), t_next))
        human_idx += h_reached
        h = h_next

    t_axis = np.arange(n_frames) * dt
    name = cfg.algorithm.value if cfg is not None else "none"
    meta = _controller_params(cfg)
    if cfg is None:
        meta = {"dmin": params.d_min, "k": params.k}
    return [
        EpisodeLog(
            scenario_seed=s.seed, algorithm=name, params=dict(meta), human_kind=human.kind.value,
            t=t_axis, events=events[i], valid=bool(valid[i]), error=errors[i],
            **{key: arr[i] for key, arr in log.items()},
        )
        for i, s in enumerate(scenarios)
    ]


def _safety(model, x_hat, h_hat, params) -> tuple[SafetyEvaluation, np.ndarray]:
    """Safety evaluation from estimates; rows where the estimated points coincide are blanked."""
    obstacle = ObstacleState(h_hat[:, :2], h_hat[:, 2:])
    pair = _pair(model, x_hat, obstacle)
    blind = pair.d <= 0
    ev = _evaluate(model, x_hat, obstacle, params, pair)
    if not np.any(blind):
        return ev, blind
    # No direction to push along: report a degenerate constraint so the
    # controller passes u0 through.
    lf = np.where(blind, 0.0, ev.lf_phi)
    lg = np.where(blind[:, None], 0.0, ev.lg_phi)
    grad = np.where(blind[:, None], 0.0, ev.grad_phi)
    return SafetyEvaluation(ev.phi, grad, lf, lg, pair), blind


def run_episode(model: RobotModel, cfg: ControllerConfig | None, scenario: Scenario,
                human: HumanModel | None = None, estimation: EstimationConfig | None = None,
                param_index: int = 0, settings: EpisodeSettings | None = None) -> EpisodeLog:
    return simulate(model, cfg, [scenario], human, estimation, param_index, settings)[0]
