"""Agent-to-goal assignment: random, min-sum optimal, and lexicographic min-max fair.

Both exact solvers work on integer weights so that optimality and the
tie-break (lexicographically smallest ``goal_of``) are decided without
rounding error:

* min-sum: each float cost is an exact dyadic rational, so scaling by a
  common power of two gives integers with the same ordering of sums;
* lexicographic min-max: the k-th smallest distinct cost gets weight
  (n + 1) ** k, which makes a min-sum matching over the weights minimize
  the sorted-descending cost vector lexicographically.

A Hungarian solve gives an optimal matching plus dual potentials; every
optimal permutation is a perfect matching on the zero-reduced-cost edges,
and the smallest such permutation is picked greedily.
"""

from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .world import WorldState

MODES = ("random", "optimal", "minmax")
BRUTE_FORCE_MAX_N = 9


class SizeExceededError(ValueError):
    """Brute-force enumeration requested for too large an instance."""


@dataclass(frozen=True)
class CostMatrix:
    costs: np.ndarray

    def __post_init__(self):
        c = np.array(self.costs, dtype=float)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise ValueError(f"cost matrix must be square, got shape {c.shape}")
        if not np.all(np.isfinite(c)) or np.any(c < 0):
            raise ValueError("costs must be finite and non-negative")
        c.setflags(write=False)
        object.__setattr__(self, "costs", c)

    @property
    def n(self) -> int:
        return self.costs.shape[0]


@dataclass(frozen=True)
class Assignment:
    goal_of: tuple[int, ...]
    mode: str

    def __post_init__(self):
        object.__setattr__(self, "goal_of", tuple(int(g) for g in self.goal_of))
        if sorted(self.goal_of) != list(range(len(self.goal_of))):
            raise ValueError(f"goal_of {self.goal_of} is not a permutation")

    def assigned_costs(self, c: CostMatrix) -> list[float]:
        return [float(c.costs[i, g]) for i, g in enumerate(self.goal_of)]

    def total(self, c: CostMatrix) -> float:
        # fsum is correctly rounded, so exact orderings of sums survive rounding
        return math.fsum(self.assigned_costs(c))

    def max_cost(self, c: CostMatrix) -> float:
        return max(self.assigned_costs(c))

    def sorted_costs(self, c: CostMatrix) -> list[float]:
        return sorted(self.assigned_costs(c), reverse=True)


def build_cost_matrix(state: WorldState) -> CostMatrix:
    """Euclidean distance from every agent to every goal."""
    diff = state.agent_pos[:, None, :] - state.goal_pos[None, :, :]
    return CostMatrix(np.sqrt(np.sum(diff * diff, axis=2)))


def assign_random(n: int, seed: int) -> Assignment:
    if n < 1:
        raise ValueError("n must be >= 1")
    perm = np.random.default_rng(seed).permutation(n)
    return Assignment(tuple(int(g) for g in perm), "random")


def _hungarian(w: Sequence[Sequence[int]]):
    """Min-sum perfect matching on a square matrix of exact numbers.

    Shortest augmenting path with potentials. Returns (goal_of, u, v) where
    u, v are feasible duals: w[i][j] - u[i] - v[j] >= 0 everywhere and == 0
    on matched edges.
    """
    n = len(w)
    inf = float("inf")
    u = [0] * (n + 1)
    v = [0] * (n + 1)
    owner = [0] * (n + 1)  # owner[j]: 1-based row matched to column j
    way = [0] * (n + 1)
    for i in range(1, n + 1):
        owner[0] = i
        j0 = 0
        minv = [inf] * (n + 1)
        used = [False] * (n + 1)
        while True:
            used[j0] = True
            i0 = owner[j0]
            row = w[i0 - 1]
            ui0 = u[i0]
            delta = inf
            j1 = 0
            for j in range(1, n + 1):
                if used[j]:
                    continue
                cur = row[j - 1] - ui0 - v[j]
                if cur < minv[j]:
                    minv[j] = cur
                    way[j] = j0
                if minv[j] < delta:
                    delta = minv[j]
                    j1 = j
            for j in range(n + 1):
                if used[j]:
                    u[owner[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if owner[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            owner[j0] = owner[j1]
            j0 = j1
    goal_of = [0] * n
    for j in range(1, n + 1):
        goal_of[owner[j] - 1] = j - 1
    return goal_of, u[1:], v[1:]


def _has_perfect_matching(rows: list[int], cols: set[int], adj: list[list[int]]) -> bool:
    """Kuhn's augmenting paths restricted to ``rows`` x ``cols``."""
    match: dict[int, int] = {}

    def augment(i, seen):
        for j in adj[i]:
            if j in cols and j not in seen:
                seen.add(j)
                if j not in match or augment(match[j], seen):
                    match[j] = i
                    return True
        return False

    return all(augment(i, set()) for i in rows)


def _smallest_optimal(w: Sequence[Sequence[int]]) -> tuple[int, ...]:
    n = len(w)
    goal_of, u, v = _hungarian(w)
    tight = [[j for j in range(n) if w[i][j] - u[i] - v[j] == 0] for i in range(n)]
    if all(len(t) == 1 for t in tight):
        return tuple(goal_of)
    free = set(range(n))
    chosen = []
    for i in range(n):
        for j in tight[i]:
            if j not in free:
                continue
            rest = free - {j}
            if j == goal_of[i] and all(goal_of[k] in rest for k in range(i + 1, n)):
                break
            if _has_perfect_matching(list(range(i + 1, n)), rest, tight):
                break
        else:  # pragma: no cover - the Hungarian matching guarantees a choice
            raise AssertionError("no tight perfect matching found")
        chosen.append(j)
        free.discard(j)
    return tuple(chosen)


def exact_sum_weights(costs: np.ndarray) -> list[list[int]]:
    """Integers proportional to the float costs, exactly."""
    ratios = [[float(x).as_integer_ratio() for x in row] for row in costs]
    scale = max((den for row in ratios for _, den in row), default=1)
    return [[num * (scale // den) for num, den in row] for row in ratios]


def lexmax_weights(costs: np.ndarray) -> list[list[int]]:
    """(n + 1) ** rank of each cost among the distinct cost values."""
    n = costs.shape[0]
    rank = {value: k for k, value in enumerate(sorted(set(costs.ravel().tolist())))}
    base = n + 1
    return [[base ** rank[x] for x in row] for row in costs.tolist()]


def assign_optimal(c: CostMatrix) -> Assignment:
    """Permutation minimizing the total cost; smallest goal_of among ties."""
    return Assignment(_smallest_optimal(exact_sum_weights(c.costs)), "optimal")


def assign_minmax_fair(c: CostMatrix) -> Assignment:
    """Lexicographic bottleneck assignment.

    Minimizes the largest assigned cost, then the second largest, and so on
    down the sorted-descending cost vector; smallest goal_of among ties.
    """
    return Assignment(_smallest_optimal(lexmax_weights(c.costs)), "minmax")


@functools.lru_cache(maxsize=None)
def _permutations(n: int) -> np.ndarray:
    return np.array(list(itertools.permutations(range(n))), dtype=int).reshape(-1, n)


def brute_force_assign(c: CostMatrix, objective: str) -> Assignment:
    """Exhaustive search over all n! permutations (test oracle, n <= 9).

    ``objective`` is "sum" (minimum total) or "lexmax" (lexicographically
    smallest sorted-descending cost vector). Ties go to the permutation that
    comes first in lexicographic order.
    """
    n = c.n
    if n > BRUTE_FORCE_MAX_N:
        raise SizeExceededError(f"brute force limited to n <= {BRUTE_FORCE_MAX_N}, got {n}")
    perms = _permutations(n)
    picked = c.costs[np.arange(n)[None, :], perms]
    if objective == "sum":
        approx = picked.sum(axis=1)
        slack = 1e-9 * max(1.0, float(np.abs(approx).max()))
        near = np.flatnonzero(approx <= approx.min() + slack)
        # exact rational comparison among the near-minimal candidates
        exact = [sum(map(Fraction, picked[k].tolist())) for k in near]
        best = near[exact.index(min(exact))]
        return Assignment(tuple(perms[best].tolist()), "optimal")
    if objective == "lexmax":
        desc = -np.sort(-picked, axis=1)
        keys = [np.arange(len(perms))] + [desc[:, k] for k in range(n - 1, -1, -1)]
        best = np.lexsort(keys)[0]
        return Assignment(tuple(perms[best].tolist()), "minmax")
    raise ValueError(f"objective must be 'sum' or 'lexmax', got {objective!r}")


def solve(c: CostMatrix, mode: str, seed: int = 0) -> Assignment:
    if mode == "random":
        return assign_random(c.n, seed)
    if mode == "optimal":
        return assign_optimal(c)
    if mode == "minmax":
        return assign_minmax_fair(c)
    raise ValueError(f"unknown assignment mode {mode!r}")
