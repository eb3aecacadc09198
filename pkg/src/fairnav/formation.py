"""Formation shapes: expected positions and per-shape success checks.

Shapes and their ``scale`` parameter:

* circle   - one landmark (center), scale = radius
* line     - two landmarks (endpoints); scale is the endpoint distance and
             is derived from the landmarks
* arrow    - one landmark (tip), scale = tail length; tails leave the tip at
             +/-135 degrees from +x
* infinity - one landmark (midpoint), scale = lemniscate half-width a
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:
    from .world import WorldState

SHAPES = ("circle", "line", "arrow", "infinity")
ARROW_TAIL_ANGLE = math.radians(135.0)


@dataclass(frozen=True)
class FormationSpec:
    shape: str
    landmarks: tuple[tuple[float, float], ...]
    scale: float
    n_positions: int
    threshold: float = 0.1

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise ValueError(f"unknown formation shape {self.shape!r}; expected one of {SHAPES}")
        marks = tuple((float(p[0]), float(p[1])) for p in self.landmarks)
        object.__setattr__(self, "landmarks", marks)
        want = 2 if self.shape == "line" else 1
        if len(marks) != want:
            raise ValueError(f"{self.shape} formation needs {want} landmark(s), got {len(marks)}")
        if self.shape == "line":
            object.__setattr__(self, "scale", math.dist(marks[0], marks[1]))
        if not self.scale > 0:
            raise ValueError("formation scale must be positive")
        if self.n_positions < 1:
            raise ValueError("n_positions must be >= 1")
        if self.threshold < 0:
            raise ValueError("threshold must be non-negative")


@dataclass(frozen=True)
class ExpectedPositions:
    points: np.ndarray


def lemniscate_point(a: float, t: float) -> tuple[float, float]:
    denom = 1.0 + math.cos(t) ** 2
    return a * math.sin(t) / denom, a * math.sin(t) * math.cos(t) / denom


def lemniscate_parameters(n: int) -> list[float]:
    """Sample parameters t_k = 2*pi*k/n.

    For even n that grid hits both t=0 and t=pi, which map to the same
    crossing point, so the grid is shifted by half a step.
    """
    offset = math.pi / n if n % 2 == 0 else 0.0
    return [2 * math.pi * k / n + offset for k in range(n)]


def arrow_tails(spec: FormationSpec) -> list[tuple[np.ndarray, np.ndarray]]:
    tip = np.asarray(spec.landmarks[0])
    tails = []
    for sign in (1.0, -1.0):
        direction = np.array([math.cos(sign * ARROW_TAIL_ANGLE), math.sin(sign * ARROW_TAIL_ANGLE)])
        tails.append((tip, tip + spec.scale * direction))
    return tails


def expected_positions(spec: FormationSpec) -> ExpectedPositions:
    n = spec.n_positions
    c = np.asarray(spec.landmarks[0])
    if spec.shape == "circle":
        theta = [2 * math.pi * k / n for k in range(n)]
        pts = [c + spec.scale * np.array([math.cos(t), math.sin(t)]) for t in theta]
    elif spec.shape == "line":
        b = np.asarray(spec.landmarks[1])
        ts = [0.5] if n == 1 else [k / (n - 1) for k in range(n)]
        pts = [c + t * (b - c) for t in ts]
    elif spec.shape == "arrow":
        pts = [c.copy()]
        per_tail = math.ceil((n - 1) / 2)
        spacing = spec.scale / per_tail if per_tail else 0.0
        tails = arrow_tails(spec)
        for k in range(n - 1):
            start, end = tails[k % 2]
            unit = (end - start) / spec.scale
            pts.append(c + (k // 2 + 1) * spacing * unit)
    else:
        pts = [c + np.array(lemniscate_point(spec.scale, t)) for t in lemniscate_parameters(n)]
    return ExpectedPositions(np.array(pts, dtype=float).reshape(-1, 2))


def _segment_distance(p, a, b) -> tuple[float, float]:
    """(distance from p to segment ab, projection parameter along ab)."""
    ab = b - a
    t = float(np.dot(p - a, ab) / np.dot(ab, ab))
    closest = a + min(max(t, 0.0), 1.0) * ab
    return float(np.linalg.norm(p - closest)), t


def on_shape(point, spec: FormationSpec, threshold: float | None = None) -> bool:
    """Shape-locus part of the success check (no unique-claim requirement)."""
    tol = spec.threshold if threshold is None else threshold
    p = np.asarray(point, dtype=float)
    c = np.asarray(spec.landmarks[0])
    if spec.shape == "circle":
        return abs(float(np.linalg.norm(p - c)) - spec.scale) <= tol
    if spec.shape == "line":
        # distance to the closed segment, so agents parked just past an
        # endpoint still count
        return _segment_distance(p, c, np.asarray(spec.landmarks[1]))[0] <= tol
    if spec.shape == "arrow":
        return min(_segment_distance(p, a, b)[0] for a, b in arrow_tails(spec)) <= tol
    r_lobe = spec.scale / 2
    for sign in (-1.0, 1.0):
        center = c + np.array([sign * r_lobe, 0.0])
        if abs(float(np.linalg.norm(p - center)) - r_lobe) <= tol:
            return True
    return False


def claim_positions(agent_pos, points, threshold: float, eligible=None) -> dict[int, int]:
    """Match agents to expected positions within ``threshold``, nearest first.

    Returns {agent index: position index}. Ties go to the lower agent index,
    then the lower position index.
    """
    agent_pos = np.asarray(agent_pos, dtype=float).reshape(-1, 2)
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    d = np.linalg.norm(agent_pos[:, None, :] - points[None, :, :], axis=2)
    pairs = sorted(
        (float(d[i, k]), i, k)
        for i in range(len(agent_pos))
        for k in range(len(points))
        if d[i, k] <= threshold and (eligible is None or eligible[i])
    )
    taken_agents, taken_points, out = set(), set(), {}
    for _, i, k in pairs:
        if i in taken_agents or k in taken_points:
            continue
        out[i] = k
        taken_agents.add(i)
        taken_points.add(k)
    return out


def formation_success(state: "WorldState", spec: FormationSpec) -> tuple[list[bool], float]:
    """Per-agent success flags and the success percentage."""
    points = expected_positions(spec).points
    eligible = [on_shape(p, spec) for p in state.agent_pos]
    claims = claim_positions(state.agent_pos, points, spec.threshold, eligible)
    flags = [i in claims for i in range(state.n_agents)]
    pct = 100.0 * sum(flags) / len(flags) if flags else 0.0
    return flags, pct
