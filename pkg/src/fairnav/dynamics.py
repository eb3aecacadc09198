"""One-step double-integrator update with penalty-only collisions and death-masking."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .observation import update_occupancy_flags
from .world import ACTION_DIRECTIONS, WorldConfig, WorldState


@dataclass
class StepOutcome:
    new_state: WorldState
    collisions: list[tuple[int, str]]
    newly_done: list[int]

    def collided_agents(self) -> set[int]:
        hit = set()
        for i, other in self.collisions:
            hit.add(i)
            kind, _, idx = other.partition(":")
            if kind == "agent":
                hit.add(int(idx))
        return hit


def _clamp_speed(v: np.ndarray, max_speed: float) -> np.ndarray:
    speed = float(np.hypot(v[0], v[1]))
    if speed <= max_speed:
        return v
    v = v * (max_speed / speed)
    while float(np.hypot(v[0], v[1])) > max_speed:
        v = v * np.nextafter(1.0, 0.0)
    return v


def detect_collisions(state: WorldState, config: WorldConfig) -> list[tuple[int, str]]:
    """Overlaps between active agents and other agents, obstacles, and walls.

    Pairs are (agent index, "kind:index"); each agent pair appears once with
    the lower index first. Touching exactly at the sum of radii is not a
    collision. Done agents neither cause nor receive collisions.
    """
    out = []
    active = np.flatnonzero(~state.done)
    ra = config.agent_radius
    for a_idx, i in enumerate(active):
        p = state.agent_pos[i]
        for j in active[a_idx + 1:]:
            if np.linalg.norm(p - state.agent_pos[j]) < 2 * ra:
                out.append((int(i), f"agent:{int(j)}"))
        for k in range(len(state.obstacle_pos)):
            if np.linalg.norm(p - state.obstacle_pos[k]) < ra + state.obstacle_radius[k]:
                out.append((int(i), f"obstacle:{k}"))
        for k, wall in enumerate(state.walls):
            if wall.distance_to(p) < ra:
                out.append((int(i), f"wall:{k}"))
    return out


def step(state: WorldState, actions: Sequence[int], config: WorldConfig) -> StepOutcome:
    """Advance the world by one timestep; ``state`` is not modified."""
    n = state.n_agents
    actions = np.asarray(actions, dtype=int).reshape(-1)
    if len(actions) != n:
        raise ValueError(f"got {len(actions)} actions for {n} agents")
    if np.any((actions < 0) | (actions >= len(ACTION_DIRECTIONS))):
        raise ValueError(f"action codes must lie in 0..{len(ACTION_DIRECTIONS) - 1}")
    if state.step_index >= config.episode_length:
        raise ValueError("episode is already over")

    new = state.copy()
    new.step_index = state.step_index + 1
    e = config.world_half_extent
    for i in range(n):
        if state.done[i]:
            continue
        accel = ACTION_DIRECTIONS[actions[i]] * config.accel_magnitude
        v = state.agent_vel[i] * (1.0 - config.damping) + accel * config.dt
        v = _clamp_speed(v, config.max_speed)
        p = state.agent_pos[i] + v * config.dt
        for axis in range(2):
            if p[axis] > e or p[axis] < -e:
                p[axis] = min(max(p[axis], -e), e)
                v[axis] = 0.0
        new.distance[i] = state.distance[i] + float(np.linalg.norm(p - state.agent_pos[i]))
        new.agent_pos[i] = p
        new.agent_vel[i] = v

    collisions = detect_collisions(new, config)

    newly_done = []
    for i in range(n):
        if new.done[i]:
            continue
        d = np.linalg.norm(new.goal_pos - new.agent_pos[i], axis=1)
        free = (new.goal_claimed_by < 0) & (d <= config.done_threshold)
        if not np.any(free):
            continue
        candidates = np.flatnonzero(free)
        g = int(candidates[np.argmin(d[candidates])])
        new.done[i] = True
        new.done_step[i] = new.step_index
        new.claimed_goal[i] = g
        new.goal_claimed_by[g] = i
        new.agent_vel[i] = 0.0
        newly_done.append(i)

    new.occupancy = update_occupancy_flags(new)
    return StepOutcome(new_state=new, collisions=collisions, newly_done=newly_done)
