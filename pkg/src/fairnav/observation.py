"""Goal occupancy flags, ego observations, and the local agent-entity graph."""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:
    from .world import WorldConfig, WorldState

# a goal with eta at or above this counts as occupied for the fallback request
OCCUPIED_THRESHOLD = 0.95

ENTITY_AGENT = 0
ENTITY_OBSTACLE = 1
ENTITY_GOAL = 2
ENTITY_TYPES = ("agent", "obstacle", "goal")


def occupancy_from_positions(agent_pos, goal_pos) -> np.ndarray:
    agent_pos = np.asarray(agent_pos, dtype=float).reshape(-1, 2)
    goal_pos = np.asarray(goal_pos, dtype=float).reshape(-1, 2)
    if len(agent_pos) == 0:
        return np.zeros(len(goal_pos))
    dx = goal_pos[:, None, 0] - agent_pos[None, :, 0]
    dy = goal_pos[:, None, 1] - agent_pos[None, :, 1]
    # plain sqrt(dx*dx + dy*dy): every operation is one IEEE rounding, so the
    # flags are reproducible by any straightforward recomputation
    d = np.sqrt(dx * dx + dy * dy)
    return np.clip(1.0 - d.min(axis=1), 0.0, 1.0)


def update_occupancy_flags(state: "WorldState") -> np.ndarray:
    """eta_j = clamp(1 - distance of the nearest agent to goal j, 0, 1)."""
    return occupancy_from_positions(state.agent_pos, state.goal_pos)


@dataclass(frozen=True)
class EgoObservation:
    position: tuple[float, float]
    velocity: tuple[float, float]
    goal1_rel: tuple[float, float]
    goal1_flag: float
    goal2_rel: tuple[float, float]
    goal2_flag: float
    goal1_index: int = -1
    goal2_index: int = -1

    def as_vector(self) -> list[float]:
        return [
            *self.position,
            *self.velocity,
            *self.goal1_rel,
            self.goal1_flag,
            *self.goal2_rel,
            self.goal2_flag,
        ]

    @classmethod
    def from_vector(cls, values) -> "EgoObservation":
        v = [float(x) for x in values]
        if len(v) != 10:
            raise ValueError(f"ego vector must have 10 entries, got {len(v)}")
        return cls((v[0], v[1]), (v[2], v[3]), (v[4], v[5]), v[6], (v[7], v[8]), v[9])


@dataclass(frozen=True)
class GraphNode:
    """One entity near the ego agent.

    ``features`` is [rel_x, rel_y, rel_vx, rel_vy, goal_rel_x, goal_rel_y,
    goal_eta, type_code], all relative to the ego agent; the goal fields
    describe the goal closest to this entity.
    """

    entity_id: int
    entity_type: str
    features: tuple[float, ...]


@dataclass(frozen=True)
class EntityGraph:
    ego_id: int
    nodes: tuple[GraphNode, ...]
    edges: tuple[tuple[int, int], ...]

    def node_ids(self) -> list[int]:
        return [node.entity_id for node in self.nodes]


def _nearest_goal_order(point, goal_pos) -> np.ndarray:
    d = np.linalg.norm(goal_pos - point, axis=1)
    # stable sort: equal distances keep the lower goal index first
    return np.argsort(d, kind="stable")


def observe(state: "WorldState", agent: int, config: "WorldConfig") -> EgoObservation:
    """Ego observation: own position/velocity plus the two nearest goals.

    If the agent is not done and every goal inside its sensing radius is
    occupied, the first goal slot is replaced by the nearest unoccupied goal
    anywhere in the world.
    """
    goals = state.goal_pos
    if len(goals) < 2:
        raise ValueError("ego observation needs at least two goals")
    p = state.agent_pos[agent]
    flags = state.occupancy
    order = _nearest_goal_order(p, goals)
    g1, g2 = int(order[0]), int(order[1])

    if not state.done[agent]:
        dist = np.linalg.norm(goals - p, axis=1)
        nearby = dist <= config.sensing_radius
        free = flags < OCCUPIED_THRESHOLD
        if not np.any(nearby & free):
            candidates = [int(j) for j in order if free[j]]
            if candidates:
                g1 = candidates[0]
                g2 = next(int(j) for j in order if j != g1)

    rel1 = goals[g1] - p
    rel2 = goals[g2] - p
    return EgoObservation(
        position=(float(p[0]), float(p[1])),
        velocity=(float(state.agent_vel[agent, 0]), float(state.agent_vel[agent, 1])),
        goal1_rel=(float(rel1[0]), float(rel1[1])),
        goal1_flag=float(flags[g1]),
        goal2_rel=(float(rel2[0]), float(rel2[1])),
        goal2_flag=float(flags[g2]),
        goal1_index=g1,
        goal2_index=g2,
    )


def entity_table(state: "WorldState", config: "WorldConfig"):
    """Every entity as (ids, types, positions, velocities).

    Ids: agents 0..N-1, then goal-type entities (goals, or formation
    landmarks when present), then obstacles, then wall sample points.
    """
    n = state.n_agents
    goal_like = state.landmarks if len(state.landmarks) else state.goal_pos
    wall_pts = [w.sample_points(2 * config.agent_radius) for w in state.walls]
    wall_pts = np.vstack(wall_pts) if wall_pts else np.zeros((0, 2))
    positions = np.vstack([state.agent_pos, goal_like, state.obstacle_pos, wall_pts])
    types = np.concatenate(
        [
            np.full(n, ENTITY_AGENT),
            np.full(len(goal_like), ENTITY_GOAL),
            np.full(len(state.obstacle_pos) + len(wall_pts), ENTITY_OBSTACLE),
        ]
    ).astype(int)
    velocities = np.zeros_like(positions)
    velocities[:n] = state.agent_vel
    return np.arange(len(positions)), types, positions, velocities


def build_graph(state: "WorldState", agent: int, config: "WorldConfig") -> EntityGraph:
    """Local graph of entities within the sensing radius of ``agent``."""
    ids, types, pos, vel = entity_table(state, config)
    r = config.sensing_radius
    ego_p = state.agent_pos[agent]
    ego_v = state.agent_vel[agent]
    within = np.linalg.norm(pos - ego_p, axis=1) <= r
    within[agent] = True
    members = ids[within]

    goals = state.goal_pos
    flags = state.occupancy
    nodes = []
    for k in members:
        g = int(_nearest_goal_order(pos[k], goals)[0]) if len(goals) else -1
        goal_rel = goals[g] - ego_p if g >= 0 else np.zeros(2)
        eta = float(flags[g]) if g >= 0 else 0.0
        rel_p = pos[k] - ego_p
        rel_v = vel[k] - ego_v if types[k] == ENTITY_AGENT else np.zeros(2)
        features = (
            float(rel_p[0]), float(rel_p[1]),
            float(rel_v[0]), float(rel_v[1]),
            float(goal_rel[0]), float(goal_rel[1]),
            eta, float(types[k]),
        )
        nodes.append(GraphNode(int(k), ENTITY_TYPES[types[k]], features))

    edges = []
    for a in members:
        for b in members:
            if a == b or types[b] != ENTITY_AGENT:
                continue
            # edges only ever point into agents; agent pairs get both directions
            if np.linalg.norm(pos[a] - pos[b]) <= r:
                edges.append((int(a), int(b)))
    edges.sort()
    return EntityGraph(ego_id=int(agent), nodes=tuple(nodes), edges=tuple(edges))
