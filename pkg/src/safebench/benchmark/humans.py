"""Parametric human agents, each a planar ball.

``GoalSeeking`` runs a PD law toward its current goal with Gaussian
acceleration noise. ``Passive`` replays a GoalSeeking trajectory rolled out
before the episode, so it is identical whatever the robot does.
``Interactive`` adds inverse-square repulsion from the robot's closest point.
``Static`` never moves.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from ..dynamics import Ball2D, IntegratorConfig, integrate

GOAL_RADIUS = 0.5
_BALL = Ball2D()


class HumanKind(str, Enum):
    PASSIVE = "passive"
    GOAL_SEEKING = "goal"
    INTERACTIVE = "interactive"
    STATIC = "static"


@dataclass(frozen=True)
class HumanModel:
    kind: HumanKind = HumanKind.PASSIVE
    kp: float = 2.0
    kd: float = 2.0
    noise_sigma: float = 0.2
    a_max: float = 4.0
    avoid_gain: float = 1.0
    # Fixed disc the human steers around (the arm base); None disables it.
    keep_out: tuple[float, float, float] | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", HumanKind(self.kind))

    @property
    def reacts_to_robot(self) -> bool:
        return self.kind is HumanKind.INTERACTIVE


def _cap(a, limit):
    norm = np.linalg.norm(a, axis=-1, keepdims=True)
    return np.where(norm > limit, a * (limit / np.where(norm > 0, norm, 1.0)), a)


def goal_seeking_control(model: HumanModel, human, goal, noise):
    human = np.asarray(human, dtype=float)
    a = model.kp * (np.asarray(goal) - human[..., :2]) - model.kd * human[..., 2:]
    if model.keep_out is not None:
        cx, cy, radius = model.keep_out
        rel = human[..., :2] - np.array([cx, cy])
        dist = np.linalg.norm(rel, axis=-1, keepdims=True)
        push = model.a_max * np.clip((radius - dist) / radius, 0.0, 1.0)
        a = a + push * rel / np.where(dist > 0, dist, 1.0)
    return _cap(a, model.a_max) + noise


def repulsion(model: HumanModel, human_pos, robot_point):
    rel = np.asarray(human_pos, dtype=float) - np.asarray(robot_point, dtype=float)
    dist = np.linalg.norm(rel, axis=-1, keepdims=True)
    rep = model.avoid_gain * rel / np.where(dist > 0, dist, np.inf) ** 3
    return _cap(rep, model.a_max)


def human_step(model: HumanModel, human, robot_point, goal, rng: np.random.Generator | None = None,
               replay=None):
    """Acceleration command for the human.

    ``robot_point`` is the planar robot point closest to the human; only the
    Interactive model uses it. Passive humans need the pre-rolled ``replay``
    control for the current frame.
    """
    human = np.asarray(human, dtype=float)
    if model.kind is HumanKind.STATIC:
        return np.zeros(human.shape[:-1] + (2,))
    if model.kind is HumanKind.PASSIVE:
        if replay is None:
            raise ValueError("a passive human needs its pre-rolled control")
        return np.asarray(replay, dtype=float)
    noise = 0.0 if rng is None or model.noise_sigma == 0 else rng.normal(0.0, model.noise_sigma, size=human.shape[:-1] + (2,))
    a = goal_seeking_control(model, human, goal, noise)
    if model.kind is HumanKind.INTERACTIVE:
        a = a + repulsion(model, human[..., :2], robot_point)
    return a


def human_noise(model: HumanModel, rng: np.random.Generator, n_frames: int) -> np.ndarray:
    """Acceleration noise for one episode, drawn up front."""
    if model.noise_sigma == 0 or model.kind is HumanKind.STATIC:
        return np.zeros((n_frames, 2))
    return rng.normal(0.0, model.noise_sigma, size=(n_frames, 2))


@dataclass(frozen=True)
class HumanRollout:
    states: np.ndarray  # (batch, n_frames + 1, 4)
    controls: np.ndarray  # (batch, n_frames, 2)
    goal_events: list[list[tuple[int, int]]]  # per episode: (goal index, frame reached)


def preroll(model: HumanModel, starts, goals, noise, integrator: IntegratorConfig,
            goal_radius: float = GOAL_RADIUS) -> HumanRollout:
    """Roll goal-seeking humans forward with no robot present.

    ``starts`` is ``(batch, 2)``, ``goals`` is ``(batch, n_goals, 2)`` and
    ``noise`` is ``(batch, n_frames, 2)``.
    """
    goals = np.asarray(goals, dtype=float)
    noise = np.asarray(noise, dtype=float)
    batch, n_frames = noise.shape[:2]
    x = np.zeros((batch, 4))
    x[:, :2] = starts
    states = np.empty((batch, n_frames + 1, 4))
    controls = np.empty((batch, n_frames, 2))
    events: list[list[tuple[int, int]]] = [[] for _ in range(batch)]
    idx = np.ones(batch, dtype=int)
    rows = np.arange(batch)
    last = goals.shape[1] - 1
    for f in range(n_frames):
        states[:, f] = x
        goal = goals[rows, np.minimum(idx, last)]
        a = goal_seeking_control(model, x, goal, noise[:, f])
        controls[:, f] = a
        x = integrate(_BALL, x, a, integrator)
        reached = (idx <= last) & (np.linalg.norm(x[:, :2] - goal, axis=-1) < goal_radius)
        for i in np.flatnonzero(reached):
            events[i].append((int(idx[i]), f + 1))
        idx = idx + reached
    states[:, n_frames] = x
    return HumanRollout(states, controls, events)
