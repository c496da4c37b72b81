"""Scenario generation, human agents, episodes, metrics and sweeps."""
from .episode import EpisodeLog, EpisodeSettings, run_episode, simulate
from .humans import HumanKind, HumanModel
from .scenarios import Scenario, Workspace, generate_scenarios, load_scenarios, save_scenarios

__all__ = [
    "EpisodeLog", "EpisodeSettings", "run_episode", "simulate", "HumanKind", "HumanModel",
    "Scenario", "Workspace", "generate_scenarios", "load_scenarios", "save_scenarios",
]
