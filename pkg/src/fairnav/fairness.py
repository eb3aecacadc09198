"""Fairness metric over distances traveled, the fairness reward, and per-agent reward terms."""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass
from typing import Sequence

from .assignment import Assignment
from .dynamics import StepOutcome
from .world import WorldConfig, WorldState


@dataclass(frozen=True)
class FairnessConfig:
    epsilon: float = 1e-5
    lam: float = 0.5
    tau0: float = 1.0
    fairness_reward_enabled: bool = False

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.lam < 0:
            raise ValueError("lambda must be non-negative")


@dataclass(frozen=True)
class FairnessSnapshot:
    distances: tuple[float, ...]
    mean: float
    std: float
    cv: float
    fairness: float


@dataclass(frozen=True)
class RewardBreakdown:
    dist_reward: float
    fair_reward: float
    goal_reward: float
    collision_penalty: float
    total: float

    @classmethod
    def compose(cls, dist, fair, goal, collision) -> "RewardBreakdown":
        return cls(dist, fair, goal, collision, reward_sum(dist, fair, goal, collision))


def reward_sum(dist: float, fair: float, goal: float, collision: float) -> float:
    """The total reward; validators must recompute totals with this exact expression."""
    return dist + fair + goal + collision


def fairness_metric(distances: Sequence[float], epsilon: float) -> FairnessSnapshot:
    """Mean over (population std + epsilon) of per-agent distances traveled.

    ``statistics`` computes the mean and spread with exact rational sums, so
    the result does not depend on agent order and equal distances give a
    spread of exactly zero.
    """
    d = tuple(float(x) for x in distances)
    if len(d) < 2:
        raise ValueError("fairness needs at least two agents")
    if any(x < 0 for x in d):
        raise ValueError("distances must be non-negative")
    mean = statistics.mean(d)
    std = statistics.pstdev(d)
    cv = std / mean if mean > 0 else math.inf
    return FairnessSnapshot(d, mean, std, cv, mean / (std + epsilon))


def fairness_reward(snapshot: FairnessSnapshot, cfg: FairnessConfig) -> float:
    return cfg.lam * math.tanh(snapshot.fairness - cfg.tau0)


def total_reward(
    state: WorldState,
    assignment: Assignment,
    outcome: StepOutcome,
    snapshot: FairnessSnapshot,
    cfg: FairnessConfig,
    world_cfg: WorldConfig,
) -> list[RewardBreakdown]:
    """Per-agent reward terms for the transition recorded in ``outcome``.

    ``state`` is the state the reward is evaluated on (normally
    ``outcome.new_state``). The goal reward is paid only to agents that
    became done this step on the goal they are assigned to.
    """
    fair = fairness_reward(snapshot, cfg) if cfg.fairness_reward_enabled else 0.0
    hit = outcome.collided_agents()
    newly = set(outcome.newly_done)
    out = []
    for i, g in enumerate(assignment.goal_of):
        dx = state.agent_pos[i, 0] - state.goal_pos[g, 0]
        dy = state.agent_pos[i, 1] - state.goal_pos[g, 1]
        dist = -math.hypot(dx, dy)
        goal = world_cfg.goal_reward if i in newly and state.claimed_goal[i] == g else 0.0
        collision = -world_cfg.collision_penalty if i in hit else 0.0
        out.append(RewardBreakdown.compose(dist, fair, goal, collision))
    return out
