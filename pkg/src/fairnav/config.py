"""YAML experiment configuration with strict key checking.

Layout (every section and key optional)::

    scenario:
      num_agents: 3
      num_obstacles: 0
      walls: [{start: [x, y], end: [x, y], thickness: 0.02}]
      assignment_mode: minmax          # random | optimal | minmax
      fairness_reward_enabled: false
      seed: 0
      episode_length: 100
      formation: {shape: circle, landmarks: [[0, 0]], scale: 0.5, threshold: 0.1}
    world:      {...WorldConfig fields...}
    fairness:   {epsilon: 1.0e-5, lambda: 0.5, tau0: 1.0}
    controller: {avoid_gain: 0.03, avoid_range: 0.3}
    run:        {episodes: 100, policy: scripted-assigned, external_cmd: null, external_timeout: 10.0}
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional

import yaml

from .fairness import FairnessConfig
from .formation import FormationSpec
from .policy import ControllerConfig
from .runner import Experiment
from .world import ScenarioConfig, Wall, WorldConfig


class ConfigError(ValueError):
    """Invalid or unreadable configuration."""


SCENARIO_KEYS = {
    "num_agents", "num_obstacles", "walls", "assignment_mode",
    "fairness_reward_enabled", "seed", "episode_length", "formation",
}
WORLD_KEYS = {f.name for f in dataclasses.fields(WorldConfig)}
FAIRNESS_KEYS = {"epsilon", "lambda", "tau0"}
CONTROLLER_KEYS = {"avoid_gain", "avoid_range"}
RUN_KEYS = {"episodes", "policy", "external_cmd", "external_timeout"}
FORMATION_KEYS = {"shape", "landmarks", "scale", "threshold", "n_positions"}
WALL_KEYS = {"start", "end", "thickness"}
SECTIONS = {
    "scenario": SCENARIO_KEYS,
    "world": WORLD_KEYS,
    "fairness": FAIRNESS_KEYS,
    "controller": CONTROLLER_KEYS,
    "run": RUN_KEYS,
}


@dataclass(frozen=True)
class LoadedConfig:
    experiment: Experiment
    episodes: int
    seed: int


def _check_keys(where: str, table: Any, allowed: set[str]) -> dict:
    if table is None:
        return {}
    if not isinstance(table, dict):
        raise ConfigError(f"{where} must be a mapping")
    unknown = sorted(set(table) - allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(map(str, unknown))}")
    return dict(table)


def read_config(path: str | Path | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from None
    if raw is None:
        return {}
    tree = _check_keys("config", raw, set(SECTIONS))
    return {name: _check_keys(name, tree.get(name), keys) for name, keys in SECTIONS.items()}


def build(tree: dict, overrides: Optional[dict] = None) -> LoadedConfig:
    """Turn a parsed config tree plus flag overrides into a runnable experiment.

    ``overrides`` keys: episodes, seed, num_agents, assignment_mode,
    fairness_reward_enabled, policy, external_cmd. ``None`` values are ignored.
    """
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
    scen = dict(tree.get("scenario", {}))
    run = dict(tree.get("run", {}))
    for key in ("num_agents", "assignment_mode", "fairness_reward_enabled", "seed"):
        if key in overrides:
            scen[key] = overrides[key]
    for key in ("episodes", "policy", "external_cmd"):
        if key in overrides:
            run[key] = overrides[key]

    try:
        num_agents = int(scen.get("num_agents", 3))
        formation = None
        if scen.get("formation") is not None:
            f = _check_keys("scenario.formation", scen["formation"], FORMATION_KEYS)
            if "shape" not in f or "landmarks" not in f:
                raise ConfigError("formation needs 'shape' and 'landmarks'")
            formation = FormationSpec(
                shape=str(f["shape"]),
                landmarks=tuple(tuple(p) for p in f["landmarks"]),
                scale=float(f.get("scale", 0.5)),
                n_positions=int(f.get("n_positions", num_agents)),
                threshold=float(f.get("threshold", 0.1)),
            )
        walls = []
        for k, w in enumerate(scen.get("walls") or []):
            w = _check_keys(f"scenario.walls[{k}]", w, WALL_KEYS)
            walls.append(Wall(tuple(w["start"]), tuple(w["end"]), float(w.get("thickness", 0.02))))
        episode_length = scen.get("episode_length")
        scenario = ScenarioConfig(
            num_agents=num_agents,
            num_obstacles=int(scen.get("num_obstacles", 0)),
            walls=tuple(walls),
            assignment_mode=str(scen.get("assignment_mode", "minmax")),
            fairness_reward_enabled=bool(scen.get("fairness_reward_enabled", False)),
            formation=formation,
            seed=int(scen.get("seed", 0)),
            episode_length=None if episode_length is None else int(episode_length),
        )
        world = WorldConfig(**tree.get("world", {}))
        fair = dict(tree.get("fairness", {}))
        if "lambda" in fair:
            fair["lam"] = fair.pop("lambda")
        fairness = FairnessConfig(**fair)
        controller = ControllerConfig(**tree.get("controller", {}))
        experiment = Experiment(
            scenario=scenario,
            world=world,
            fairness=fairness,
            controller=controller,
            policy=str(run.get("policy", "scripted-assigned")),
            external_cmd=run.get("external_cmd"),
            external_timeout=float(run.get("external_timeout", 10.0)),
        )
        episodes = int(run.get("episodes", 100))
    except ConfigError:
        raise
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(str(exc)) from None
    if episodes < 1:
        raise ConfigError("episodes must be >= 1")
    return LoadedConfig(experiment, episodes, scenario.seed)


def load(path: str | Path | None, overrides: Optional[dict] = None) -> LoadedConfig:
    return build(read_config(path), overrides)


def with_agents(exp: Experiment, n: int) -> Experiment:
    """Same experiment with ``n`` agents (formation positions follow)."""
    formation = exp.scenario.formation
    if formation is not None:
        formation = dataclasses.replace(formation, n_positions=n)
    scenario = dataclasses.replace(exp.scenario, num_agents=n, formation=formation)
    return dataclasses.replace(exp, scenario=scenario)
