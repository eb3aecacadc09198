"""World configuration, entity state containers, and episode initialization.

The simulator keeps its state as a struct of numpy arrays (``WorldState``);
``AgentState``/``GoalState`` are read-only per-entity views built on demand.

Coordinate frame: the arena is the square [-E, +E]^2 with E =
``WorldConfig.world_half_extent``; x to the right, y up.
"""

from __future__ import annotations

import dataclasses
import enum
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Optional, Sequence

import numpy as np

if TYPE_CHECKING:
    from .formation import FormationSpec

ASSIGNMENT_MODES = ("random", "optimal", "minmax")

# extra gap on top of the sum of radii when placing entities
PLACEMENT_CLEARANCE = 0.01
PLACEMENT_ATTEMPTS = 1000


class PlacementError(RuntimeError):
    """Rejection sampling could not place an entity (scenario too crowded)."""


class Action(enum.IntEnum):
    NOOP = 0
    ACCEL_PLUS_X = 1
    ACCEL_MINUS_X = 2
    ACCEL_PLUS_Y = 3
    ACCEL_MINUS_Y = 4


# unit acceleration direction per action code
ACTION_DIRECTIONS = np.array(
    [[0.0, 0.0], [1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]]
)


@dataclass(frozen=True)
class WorldConfig:
    world_half_extent: float = 1.0
    dt: float = 0.1
    damping: float = 0.25
    accel_magnitude: float = 0.5
    max_speed: float = 1.0
    sensing_radius: float = 0.5
    agent_radius: float = 0.05
    goal_radius: float = 0.05
    obstacle_radius: float = 0.10
    episode_length: int = 100
    collision_penalty: float = 5.0
    goal_reward: float = 5.0
    done_threshold: Optional[float] = None

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.episode_length < 1:
            raise ValueError("episode_length must be >= 1")
        if self.sensing_radius <= 0:
            raise ValueError("sensing_radius must be positive")
        if not 0 <= self.damping < 1:
            raise ValueError("damping must lie in [0, 1)")
        if self.accel_magnitude <= 0 or self.max_speed <= 0:
            raise ValueError("accel_magnitude and max_speed must be positive")
        if self.world_half_extent <= 0:
            raise ValueError("world_half_extent must be positive")
        for name in ("agent_radius", "goal_radius", "obstacle_radius"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.done_threshold is None:
            object.__setattr__(self, "done_threshold", self.agent_radius + self.goal_radius)
        elif self.done_threshold < 0:
            raise ValueError("done_threshold must be non-negative")


@dataclass(frozen=True)
class Wall:
    """Axis-aligned wall: a horizontal or vertical segment with thickness."""

    start: tuple[float, float]
    end: tuple[float, float]
    thickness: float = 0.02

    def __post_init__(self):
        object.__setattr__(self, "start", (float(self.start[0]), float(self.start[1])))
        object.__setattr__(self, "end", (float(self.end[0]), float(self.end[1])))
        if self.start[0] != self.end[0] and self.start[1] != self.end[1]:
            raise ValueError(f"wall {self.start}->{self.end} is not axis-aligned")
        if self.thickness <= 0:
            raise ValueError("wall thickness must be positive")

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        """(xmin, xmax, ymin, ymax) of the wall rectangle."""
        h = self.thickness / 2
        xs = sorted((self.start[0], self.end[0]))
        ys = sorted((self.start[1], self.end[1]))
        return xs[0] - h, xs[1] + h, ys[0] - h, ys[1] + h

    def distance_to(self, point) -> float:
        """Euclidean distance from a point to the wall rectangle (0 inside)."""
        xmin, xmax, ymin, ymax = self.bounds
        dx = max(xmin - point[0], 0.0, point[0] - xmax)
        dy = max(ymin - point[1], 0.0, point[1] - ymax)
        return float(np.hypot(dx, dy))

    def sample_points(self, spacing: float) -> np.ndarray:
        """Points along the wall's center segment, endpoints included."""
        a = np.asarray(self.start)
        b = np.asarray(self.end)
        length = float(np.linalg.norm(b - a))
        count = max(int(np.ceil(length / spacing)), 1) + 1 if spacing > 0 else 2
        t = np.linspace(0.0, 1.0, count)
        return a + t[:, None] * (b - a)


@dataclass(frozen=True)
class ScenarioConfig:
    num_agents: int = 3
    num_obstacles: int = 0
    walls: tuple[Wall, ...] = ()
    assignment_mode: str = "minmax"
    fairness_reward_enabled: bool = False
    formation: Optional["FormationSpec"] = None
    seed: int = 0
    episode_length: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "walls", tuple(self.walls))
        if self.num_agents < 1:
            raise ValueError("num_agents must be >= 1")
        if self.num_obstacles < 0:
            raise ValueError("num_obstacles must be >= 0")
        if self.assignment_mode not in ASSIGNMENT_MODES:
            raise ValueError(
                f"assignment_mode must be one of {ASSIGNMENT_MODES}, got {self.assignment_mode!r}"
            )
        if self.episode_length is not None and self.episode_length < 1:
            raise ValueError("episode_length must be >= 1")
        if self.formation is not None and self.formation.n_positions != self.num_agents:
            raise ValueError(
                f"formation has {self.formation.n_positions} expected positions "
                f"but the scenario has {self.num_agents} agents"
            )

    def world_config(self, base: WorldConfig) -> WorldConfig:
        """``base`` with this scenario's episode length applied."""
        if self.episode_length is None or self.episode_length == base.episode_length:
            return base
        return dataclasses.replace(base, episode_length=self.episode_length)


@dataclass(frozen=True)
class AgentState:
    position: tuple[float, float]
    velocity: tuple[float, float]
    distance_traveled: float
    done: bool
    done_step: Optional[int]
    claimed_goal: Optional[int]


@dataclass(frozen=True)
class GoalState:
    position: tuple[float, float]
    occupancy_flag: float
    claimed_by: Optional[int]


def _empty_points() -> np.ndarray:
    return np.zeros((0, 2))


@dataclass
class WorldState:
    """All entity state at one timestep.

    Optional integer fields (``done_step``, ``claimed_goal``,
    ``goal_claimed_by``) use -1 for "unset".
    """

    step_index: int
    agent_pos: np.ndarray
    agent_vel: np.ndarray
    distance: np.ndarray
    done: np.ndarray
    done_step: np.ndarray
    claimed_goal: np.ndarray
    goal_pos: np.ndarray
    goal_claimed_by: np.ndarray
    occupancy: np.ndarray
    obstacle_pos: np.ndarray = field(default_factory=_empty_points)
    obstacle_radius: np.ndarray = field(default_factory=lambda: np.zeros(0))
    walls: tuple[Wall, ...] = ()
    # formation landmarks; exposed to the graph as goal-type entities
    landmarks: np.ndarray = field(default_factory=_empty_points)

    @classmethod
    def from_positions(
        cls,
        agent_pos,
        goal_pos,
        *,
        agent_vel=None,
        obstacle_pos=None,
        obstacle_radius: float | Sequence[float] = 0.10,
        walls: Sequence[Wall] = (),
        landmarks=None,
        step_index: int = 0,
    ) -> "WorldState":
        """Fresh state (nobody done, nothing claimed) from raw positions."""
        from .observation import occupancy_from_positions

        agent_pos = np.array(agent_pos, dtype=float).reshape(-1, 2)
        goal_pos = np.array(goal_pos, dtype=float).reshape(-1, 2)
        n = len(agent_pos)
        vel = np.zeros((n, 2)) if agent_vel is None else np.array(agent_vel, dtype=float).reshape(n, 2)
        obs = _empty_points() if obstacle_pos is None else np.array(obstacle_pos, dtype=float).reshape(-1, 2)
        radius = np.broadcast_to(np.asarray(obstacle_radius, dtype=float), (len(obs),)).copy()
        marks = _empty_points() if landmarks is None else np.array(landmarks, dtype=float).reshape(-1, 2)
        return cls(
            step_index=step_index,
            agent_pos=agent_pos,
            agent_vel=vel,
            distance=np.zeros(n),
            done=np.zeros(n, dtype=bool),
            done_step=np.full(n, -1, dtype=int),
            claimed_goal=np.full(n, -1, dtype=int),
            goal_pos=goal_pos,
            goal_claimed_by=np.full(len(goal_pos), -1, dtype=int),
            occupancy=occupancy_from_positions(agent_pos, goal_pos),
            obstacle_pos=obs,
            obstacle_radius=radius,
            walls=tuple(walls),
            landmarks=marks,
        )

    @property
    def n_agents(self) -> int:
        return len(self.agent_pos)

    @property
    def agents(self) -> list[AgentState]:
        out = []
        for i in range(self.n_agents):
            done_step = int(self.done_step[i])
            goal = int(self.claimed_goal[i])
            out.append(
                AgentState(
                    position=(float(self.agent_pos[i, 0]), float(self.agent_pos[i, 1])),
                    velocity=(float(self.agent_vel[i, 0]), float(self.agent_vel[i, 1])),
                    distance_traveled=float(self.distance[i]),
                    done=bool(self.done[i]),
                    done_step=done_step if done_step >= 0 else None,
                    claimed_goal=goal if goal >= 0 else None,
                )
            )
        return out

    @property
    def goals(self) -> list[GoalState]:
        out = []
        for j in range(len(self.goal_pos)):
            owner = int(self.goal_claimed_by[j])
            out.append(
                GoalState(
                    position=(float(self.goal_pos[j, 0]), float(self.goal_pos[j, 1])),
                    occupancy_flag=float(self.occupancy[j]),
                    claimed_by=owner if owner >= 0 else None,
                )
            )
        return out

    def copy(self) -> "WorldState":
        return dataclasses.replace(
            self,
            **{
                f.name: getattr(self, f.name).copy()
                for f in dataclasses.fields(self)
                if isinstance(getattr(self, f.name), np.ndarray)
            },
        )

    def equals(self, other: "WorldState") -> bool:
        """Bit-exact equality of every field."""
        if self.step_index != other.step_index or self.walls != other.walls:
            return False
        for f in dataclasses.fields(self):
            a = getattr(self, f.name)
            if isinstance(a, np.ndarray):
                b = getattr(other, f.name)
                if a.shape != b.shape or a.dtype != b.dtype or not np.array_equal(a, b):
                    return False
        return True


def check_state_invariants(state: WorldState, config: WorldConfig) -> list[str]:
    """Return a description of every violated state invariant (empty if clean)."""
    problems = []
    n = state.n_agents
    if len(state.goal_pos) != n:
        problems.append(f"{n} agents but {len(state.goal_pos)} goals")
    if not 0 <= state.step_index <= config.episode_length:
        problems.append(f"step_index {state.step_index} outside [0, {config.episode_length}]")
    e = config.world_half_extent
    for name in ("agent_pos", "goal_pos", "obstacle_pos"):
        pts = getattr(state, name)
        if len(pts) and np.any(np.abs(pts) > e):
            problems.append(f"{name} outside the arena")
    flags = state.occupancy
    if np.any(flags < 0) or np.any(flags > 1):
        problems.append("occupancy flag outside [0, 1]")
    for i in range(n):
        if state.done[i]:
            g = state.claimed_goal[i]
            if g < 0:
                problems.append(f"agent {i} done without a claimed goal")
                continue
            d = float(np.linalg.norm(state.agent_pos[i] - state.goal_pos[g]))
            if d > config.done_threshold:
                problems.append(f"agent {i} done but {d:.6g} from its goal")
            if state.goal_claimed_by[g] != i:
                problems.append(f"goal {g} not recorded as claimed by agent {i}")
    claimed = state.claimed_goal[state.claimed_goal >= 0]
    if len(set(claimed.tolist())) != len(claimed):
        problems.append("a goal is claimed by more than one agent")
    return problems


def _disc_clear(center, radius, placed_pos, placed_rad, walls) -> bool:
    if len(placed_pos):
        gaps = np.linalg.norm(placed_pos - center, axis=1) - placed_rad - radius
        if np.any(gaps <= PLACEMENT_CLEARANCE):
            return False
    for wall in walls:
        if wall.distance_to(center) - radius <= PLACEMENT_CLEARANCE:
            return False
    return True


def _place(rng, count, radius, extent, placed_pos, placed_rad, walls, what):
    out = []
    lo, hi = -extent + radius, extent - radius
    if lo > hi:
        raise PlacementError(f"{what} radius {radius} does not fit in the arena")
    for k in range(count):
        for _ in range(PLACEMENT_ATTEMPTS):
            center = rng.uniform(lo, hi, size=2)
            if _disc_clear(center, radius, placed_pos, placed_rad, walls):
                break
        else:
            raise PlacementError(
                f"could not place {what} {k} after {PLACEMENT_ATTEMPTS} attempts"
            )
        out.append(center)
        placed_pos = np.vstack([placed_pos, center])
        placed_rad = np.append(placed_rad, radius)
    return np.array(out).reshape(-1, 2), placed_pos, placed_rad


def init_world(config: WorldConfig, scenario: ScenarioConfig, seed: int) -> WorldState:
    """Place obstacles, goals and agents by seeded uniform rejection sampling.

    In formation scenarios the goals are the formation's expected positions
    and the landmarks are recorded on the state; agents are still placed
    randomly, clear of the expected positions.
    """
    rng = np.random.default_rng(seed)
    e = config.world_half_extent
    walls = scenario.walls
    placed_pos = _empty_points()
    placed_rad = np.zeros(0)

    obstacles, placed_pos, placed_rad = _place(
        rng, scenario.num_obstacles, config.obstacle_radius, e, placed_pos, placed_rad, walls, "obstacle"
    )

    landmarks = None
    if scenario.formation is not None:
        from .formation import expected_positions

        goals = expected_positions(scenario.formation).points
        if np.any(np.abs(goals) > e):
            raise PlacementError("formation expected positions fall outside the arena")
        placed_pos = np.vstack([placed_pos, goals])
        placed_rad = np.append(placed_rad, np.full(len(goals), config.goal_radius))
        landmarks = np.asarray(scenario.formation.landmarks, dtype=float)
    else:
        goals, placed_pos, placed_rad = _place(
            rng, scenario.num_agents, config.goal_radius, e, placed_pos, placed_rad, walls, "goal"
        )

    agents, placed_pos, placed_rad = _place(
        rng, scenario.num_agents, config.agent_radius, e, placed_pos, placed_rad, walls, "agent"
    )
    return WorldState.from_positions(
        agents,
        goals,
        obstacle_pos=obstacles,
        obstacle_radius=config.obstacle_radius,
        walls=walls,
        landmarks=landmarks,
    )
