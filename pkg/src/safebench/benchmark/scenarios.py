"""Reproducible goal sequences for benchmark episodes."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15

DEFAULT_DURATION = 30.0
DEFAULT_FPS = 20
GOALS_PER_AGENT = 40
MIN_START_SEPARATION = 2.0


def splitmix64(state: int) -> int:
    z = (state + GOLDEN_GAMMA) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def scenario_seed(master_seed: int, index: int) -> int:
    """Seed of scenario ``index``: the splitmix64 stream of ``master_seed``."""
    return splitmix64((master_seed + index * GOLDEN_GAMMA) & MASK64)


@dataclass(frozen=True)
class Workspace:
    xmin: float = -5.0
    xmax: float = 5.0
    ymin: float = -5.0
    ymax: float = 5.0

    def __post_init__(self):
        if not (self.xmax > self.xmin and self.ymax > self.ymin):
            raise ValueError(f"degenerate workspace {self}")

    def inner(self, margin: float = 0.1) -> Workspace:
        mx = margin * (self.xmax - self.xmin)
        my = margin * (self.ymax - self.ymin)
        return Workspace(self.xmin + mx, self.xmax - mx, self.ymin + my, self.ymax - my)

    def contains(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=float)
        return (p[..., 0] >= self.xmin) & (p[..., 0] <= self.xmax) & (p[..., 1] >= self.ymin) & (p[..., 1] <= self.ymax)

    def as_list(self) -> list[float]:
        return [self.xmin, self.xmax, self.ymin, self.ymax]


@dataclass(frozen=True)
class Scenario:
    """Goal sequences for the robot and the human.

    The first entry of each list is the agent's starting point; the goals to
    reach are the entries after it, in order.
    """

    seed: int
    robot_goals: np.ndarray
    human_goals: np.ndarray
    duration: float = DEFAULT_DURATION
    fps: int = DEFAULT_FPS
    workspace: Workspace = field(default_factory=Workspace)
    region: tuple[float, float] | None = None  # goal annulus radii, if any

    def __post_init__(self):
        object.__setattr__(self, "robot_goals", np.asarray(self.robot_goals, dtype=float))
        object.__setattr__(self, "human_goals", np.asarray(self.human_goals, dtype=float))
        if self.duration <= 0 or self.fps <= 0:
            raise ValueError("duration and fps must be positive")

    @property
    def n_frames(self) -> int:
        return int(round(self.duration * self.fps))

    @property
    def dt(self) -> float:
        return 1.0 / self.fps

    def to_dict(self) -> dict:
        out = {
            "seed": int(self.seed),
            "robot_goals": self.robot_goals.tolist(),
            "human_goals": self.human_goals.tolist(),
            "duration": self.duration,
            "fps": self.fps,
            "workspace": self.workspace.as_list(),
        }
        if self.region is not None:
            out["region"] = list(self.region)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> Scenario:
        ws = data.get("workspace")
        region = data.get("region")
        return cls(
            seed=int(data["seed"]),
            robot_goals=data["robot_goals"],
            human_goals=data["human_goals"],
            duration=float(data.get("duration", DEFAULT_DURATION)),
            fps=int(data.get("fps", DEFAULT_FPS)),
            workspace=Workspace(*ws) if ws is not None else Workspace(),
            region=tuple(region) if region is not None else None,
        )


def _sample_points(rng: np.random.Generator, n: int, box: Workspace, region) -> np.ndarray:
    if region is None:
        xs = rng.uniform(box.xmin, box.xmax, size=n)
        ys = rng.uniform(box.ymin, box.ymax, size=n)
        return np.stack([xs, ys], axis=-1)
    r_in, r_out = region
    out = []
    while len(out) < n:
        # area-uniform draw in the annulus, rejected outside the box
        r = math.sqrt(rng.uniform(r_in * r_in, r_out * r_out))
        a = rng.uniform(-math.pi, math.pi)
        p = (r * math.cos(a), r * math.sin(a))
        if box.contains(p):
            out.append(p)
    return np.asarray(out)


def make_scenario(seed: int, workspace: Workspace | None = None, region=None,
                  duration: float = DEFAULT_DURATION, fps: int = DEFAULT_FPS,
                  n_goals: int = GOALS_PER_AGENT) -> Scenario:
    workspace = workspace or Workspace()
    box = workspace.inner(0.1)
    rng = np.random.default_rng(seed)
    robot = _sample_points(rng, n_goals + 1, box, region)
    human = _sample_points(rng, n_goals + 1, box, region)
    separation = min(MIN_START_SEPARATION, 0.5 * (region[1] if region else np.inf))
    for _ in range(1000):
        if np.linalg.norm(human[0] - robot[0]) >= separation:
            break
        human[0] = _sample_points(rng, 1, box, region)[0]
    return Scenario(seed, robot, human, duration, fps, workspace, tuple(region) if region else None)


def generate_scenarios(master_seed: int, n: int, workspace: Workspace | None = None, region=None,
                       duration: float = DEFAULT_DURATION, fps: int = DEFAULT_FPS) -> list[Scenario]:
    """``n`` scenarios whose i-th member depends only on ``(master_seed, i)``."""
    if n < 1:
        raise ValueError(f"need at least one scenario, got n={n}")
    return [make_scenario(scenario_seed(master_seed, i), workspace, region, duration, fps) for i in range(n)]


def save_scenarios(scenarios: list[Scenario], path, master_seed: int | None = None):
    payload = {"master_seed": master_seed, "scenarios": [s.to_dict() for s in scenarios]}
    Path(path).write_text(json.dumps(payload, indent=1) + "\n")


def load_scenarios(path) -> list[Scenario]:
    payload = json.loads(Path(path).read_text())
    items = payload["scenarios"] if isinstance(payload, dict) else payload
    return [Scenario.from_dict(item) for item in items]

