"""Episode and batch execution, evaluation metrics, and per-step traces."""

from __future__ import annotations

import dataclasses
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .assignment import Assignment, CostMatrix, assign_minmax_fair, assign_optimal, assign_random, build_cost_matrix
from .dynamics import step
from .fairness import FairnessConfig, FairnessSnapshot, fairness_metric, total_reward
from .formation import formation_success
from .observation import build_graph, observe
from .policy import ControllerConfig, ExternalPolicy, PolicyInput, scripted_action
from .world import ScenarioConfig, WorldConfig, WorldState, init_world

POLICIES = ("scripted-ego", "scripted-assigned", "external")
METRICS = ("F", "S_pct", "T", "D", "collisions")
THREADS_ENV = "FAIRNAV_THREADS"

VARIANT_PRESETS = {
    "ra": ("random", False),
    "oa": ("optimal", False),
    "fa": ("minmax", False),
    "fa_fr": ("minmax", True),
}
_MODE_LABELS = {"random": "RA", "optimal": "OA", "minmax": "FA"}


def variant_label(mode: str, fair_reward: bool) -> str:
    return _MODE_LABELS[mode] + ("+FR" if fair_reward else "")


@dataclass(frozen=True)
class Experiment:
    """Everything needed to run episodes of one scenario."""

    scenario: ScenarioConfig
    world: WorldConfig = field(default_factory=WorldConfig)
    fairness: FairnessConfig = field(default_factory=FairnessConfig)
    controller: ControllerConfig = field(default_factory=ControllerConfig)
    policy: str = "scripted-assigned"
    external_cmd: Optional[str] = None
    external_timeout: float = 10.0

    def __post_init__(self):
        if self.policy not in POLICIES:
            raise ValueError(f"policy must be one of {POLICIES}, got {self.policy!r}")
        if self.policy == "external" and not self.external_cmd:
            raise ValueError("the external policy needs a command line")
        self.controller.check(self.world_config)

    @property
    def world_config(self) -> WorldConfig:
        return self.scenario.world_config(self.world)

    @property
    def fairness_config(self) -> FairnessConfig:
        return dataclasses.replace(
            self.fairness, fairness_reward_enabled=self.scenario.fairness_reward_enabled
        )

    @property
    def label(self) -> str:
        return variant_label(self.scenario.assignment_mode, self.scenario.fairness_reward_enabled)

    def with_variant(self, preset: str) -> "Experiment":
        mode, fair = VARIANT_PRESETS[preset]
        scenario = dataclasses.replace(
            self.scenario, assignment_mode=mode, fairness_reward_enabled=fair
        )
        return dataclasses.replace(self, scenario=scenario)


@dataclass(frozen=True)
class EpisodeMetrics:
    seed: int
    fairness: float
    success_pct: float
    episode_fraction: float
    total_distance: float
    per_agent_distances: tuple[float, ...]
    collision_count: int

    def row(self) -> dict:
        return {
            "seed": self.seed,
            "F": self.fairness,
            "S_pct": self.success_pct,
            "T": self.episode_fraction,
            "D": self.total_distance,
            "collisions": self.collision_count,
        }


@dataclass
class EpisodeResult:
    metrics: EpisodeMetrics
    trace: list[dict] = field(default_factory=list)


@dataclass(frozen=True)
class MetricStats:
    median: float
    mean: float
    p10: float
    p90: float


@dataclass(frozen=True)
class BatchSummary:
    label: str
    n_agents: int
    episodes: int
    stats: dict

    def table_row(self) -> dict:
        return {
            "model": self.label,
            "agents": self.n_agents,
            "F": self.stats["F"].median,
            "S_pct": self.stats["S_pct"].mean,
            "T": self.stats["T"].median,
            "D": self.stats["D"].median,
        }


@dataclass
class BatchResult:
    summary: BatchSummary
    episodes: list[EpisodeResult]

    @property
    def rows(self) -> list[dict]:
        return [e.metrics.row() for e in self.episodes]


def random_assignment_seed(seed: int) -> int:
    return int(np.random.SeedSequence([seed, 1]).generate_state(1)[0])


def solve_active(state: WorldState, mode: str) -> Assignment:
    """Optimal or fair assignment with done agents pinned to their goals.

    The solver sees only agents still moving and goals not yet claimed.
    """
    c = build_cost_matrix(state)
    active = np.flatnonzero(~state.done)
    free = np.flatnonzero(state.goal_claimed_by < 0)
    goal_of = state.claimed_goal.copy()
    if len(active):
        sub = CostMatrix(c.costs[np.ix_(active, free)])
        solver = assign_optimal if mode == "optimal" else assign_minmax_fair
        picked = solver(sub).goal_of
        goal_of[active] = free[list(picked)]
    return Assignment(tuple(goal_of.tolist()), mode)


def _vec(a) -> list[float]:
    return [float(x) for x in a]


def _episode_header(exp: Experiment, seed: int) -> dict:
    return {
        "type": "episode",
        "seed": seed,
        "n_agents": exp.scenario.num_agents,
        "assignment_mode": exp.scenario.assignment_mode,
        "fairness_reward": exp.scenario.fairness_reward_enabled,
        "lambda": exp.fairness.lam,
        "world": dataclasses.asdict(exp.world_config),
    }


def _snapshot_record(snap: Optional[FairnessSnapshot]) -> Optional[dict]:
    if snap is None:
        return None
    return {
        "distances": list(snap.distances),
        "mean": snap.mean,
        "std": snap.std,
        "cv": snap.cv if math.isfinite(snap.cv) else None,
        "F": snap.fairness,
    }


def run_episode(exp: Experiment, seed: int, trace: bool = False) -> EpisodeResult:
    """Run one episode to completion (all agents done or the step limit)."""
    scenario = exp.scenario
    world_cfg = exp.world_config
    fair_cfg = exp.fairness_config
    state = init_world(world_cfg, scenario, seed)
    n = state.n_agents
    mode = scenario.assignment_mode
    fixed = assign_random(n, random_assignment_seed(seed)) if mode == "random" else None
    controller = dataclasses.replace(
        exp.controller,
        target_mode="ego_goal1" if exp.policy == "scripted-ego" else "fixed_assignment",
    )
    records = [_episode_header(exp, seed)] if trace else []
    collisions = 0
    bridge = None
    if exp.policy == "external":
        bridge = ExternalPolicy(exp.external_cmd, timeout=exp.external_timeout).start()
    try:
        while state.step_index < world_cfg.episode_length and not state.done.all():
            assignment = fixed if fixed is not None else solve_active(state, mode)
            inputs = []
            for i in range(n):
                target = None
                if controller.target_mode == "fixed_assignment":
                    rel = state.goal_pos[assignment.goal_of[i]] - state.agent_pos[i]
                    target = (float(rel[0]), float(rel[1]))
                inputs.append(
                    PolicyInput(
                        ego=observe(state, i, world_cfg),
                        graph=build_graph(state, i, world_cfg),
                        agent=i,
                        step=state.step_index,
                        done=bool(state.done[i]),
                        target=target,
                    )
                )
            if bridge is not None:
                actions = bridge.act(inputs, state.step_index)
            else:
                actions = [int(scripted_action(inp, controller, world_cfg)) for inp in inputs]

            outcome = step(state, actions, world_cfg)
            new = outcome.new_state
            snap = fairness_metric(new.distance, fair_cfg.epsilon) if n >= 2 else None
            if snap is None:
                snap = FairnessSnapshot(tuple(new.distance.tolist()), 0.0, 0.0, math.inf, 0.0)
            rewards = total_reward(new, assignment, outcome, snap, fair_cfg, world_cfg)
            collisions += len(outcome.collisions)

            if trace:
                costs = build_cost_matrix(state)
                oa = solve_active(state, "optimal")
                fa = solve_active(state, "minmax")
                records.append(
                    {
                        "type": "step",
                        "seed": seed,
                        "step": new.step_index,
                        "actions": [int(a) for a in actions],
                        "agents": [
                            {
                                "p": _vec(new.agent_pos[i]),
                                "v": _vec(new.agent_vel[i]),
                                "d": float(new.distance[i]),
                                "done": bool(new.done[i]),
                                "goal": int(new.claimed_goal[i]),
                            }
                            for i in range(n)
                        ],
                        "assignment": list(assignment.goal_of),
                        "rewards": [dataclasses.asdict(r) for r in rewards],
                        "fairness": _snapshot_record(snap if n >= 2 else None),
                        "collisions": [[i, other] for i, other in outcome.collisions],
                        "newly_done": list(outcome.newly_done),
                        "dominance": {
                            "oa_sum": oa.total(costs),
                            "oa_max": oa.max_cost(costs),
                            "fa_sum": fa.total(costs),
                            "fa_max": fa.max_cost(costs),
                        },
                    }
                )
            state = new
    finally:
        if bridge is not None:
            bridge.close()

    metrics = episode_metrics(exp, state, seed, collisions)
    if trace:
        records.append({"type": "end", "seed": seed, **metrics.row()})
    return EpisodeResult(metrics, records)


def episode_metrics(exp: Experiment, state: WorldState, seed: int, collisions: int) -> EpisodeMetrics:
    n = state.n_agents
    episode_length = exp.world_config.episode_length
    if exp.scenario.formation is not None:
        _, success = formation_success(state, exp.scenario.formation)
    else:
        success = 100.0 * int(state.done.sum()) / n
    if state.done.all() and success == 100.0:
        fraction = int(state.done_step.max()) / episode_length
    else:
        fraction = 1.0
    distances = tuple(float(d) for d in state.distance)
    fairness = fairness_metric(distances, exp.fairness.epsilon).fairness if n >= 2 else math.nan
    return EpisodeMetrics(
        seed=seed,
        fairness=fairness,
        success_pct=success,
        episode_fraction=fraction,
        total_distance=math.fsum(distances),
        per_agent_distances=distances,
        collision_count=collisions,
    )


def metric_stats(values) -> MetricStats:
    v = np.asarray(values, dtype=float)
    return MetricStats(
        median=float(np.median(v)),
        mean=float(np.mean(v)),
        p10=float(np.percentile(v, 10)),
        p90=float(np.percentile(v, 90)),
    )


def summarize(exp: Experiment, rows: list[dict]) -> BatchSummary:
    stats = {m: metric_stats([r[m] for r in rows]) for m in METRICS}
    return BatchSummary(exp.label, exp.scenario.num_agents, len(rows), stats)


def max_workers() -> int:
    raw = os.environ.get(THREADS_ENV)
    cap = os.cpu_count() or 1
    if raw:
        try:
            cap = max(1, int(raw))
        except ValueError:
            raise ValueError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    return cap


def _run_one(args) -> EpisodeResult:
    exp, seed, trace = args
    return run_episode(exp, seed, trace)


def run_batch(
    exp: Experiment,
    episodes: int,
    base_seed: int,
    trace: bool = False,
    workers: Optional[int] = None,
) -> BatchResult:
    """Run episodes with seeds base_seed .. base_seed + episodes - 1."""
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    jobs = [(exp, base_seed + k, trace) for k in range(episodes)]
    workers = min(max_workers() if workers is None else workers, episodes)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_one, jobs))
    else:
        results = [_run_one(job) for job in jobs]
    rows = [r.metrics.row() for r in results]
    return BatchResult(summarize(exp, rows), results)
