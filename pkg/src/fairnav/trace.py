"""Per-step trace files (one JSON object per line) and the trace validator."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

from .fairness import reward_sum


@dataclass(frozen=True)
class Violation:
    seed: Optional[int]
    step: Optional[int]
    message: str

    def __str__(self) -> str:
        return f"seed {self.seed} step {self.step}: {self.message}"


def write_trace(path: str | Path, records: Iterable[dict]) -> None:
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec, allow_nan=False) + "\n")


def read_trace(path: str | Path) -> list[dict]:
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                out.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: not a JSON object ({exc})") from None
    return out


class _Episode:
    def __init__(self, header: dict):
        self.seed = header.get("seed")
        self.world = header["world"]
        self.lam = float(header["lambda"])
        self.n = int(header["n_agents"])
        self.step = 0
        self.done = [False] * self.n
        self.distance = [0.0] * self.n
        self.parked: dict[int, list] = {}
        self.paid_goal: set[int] = set()


def _check_step(ep: _Episode, rec: dict) -> list[str]:
    bad = []
    step = rec.get("step")
    if step != ep.step + 1:
        bad.append(f"step index {step} does not follow {ep.step}")
    if step is not None and step > ep.world["episode_length"]:
        bad.append(f"step index {step} beyond episode length")
    agents = rec["agents"]
    if len(agents) != ep.n:
        return bad + [f"{len(agents)} agent records for {ep.n} agents"]
    if sorted(rec["assignment"]) != list(range(ep.n)):
        bad.append(f"assignment {rec['assignment']} is not a permutation")

    extent = ep.world["world_half_extent"]
    vmax = ep.world["max_speed"]
    for i, a in enumerate(agents):
        x, y = a["p"]
        if abs(x) > extent or abs(y) > extent:
            bad.append(f"agent {i} outside the arena at {a['p']}")
        if math.hypot(*a["v"]) > vmax:
            bad.append(f"agent {i} speed {math.hypot(*a['v'])} exceeds {vmax}")
        if a["d"] < ep.distance[i]:
            bad.append(f"agent {i} distance traveled decreased")
        if ep.done[i] and not a["done"]:
            bad.append(f"agent {i} stopped being done")
        if i in ep.parked and a["p"] != ep.parked[i]:
            bad.append(f"done agent {i} moved")

    fair_values = set()
    newly = set(rec.get("newly_done", []))
    for i, r in enumerate(rec["rewards"]):
        expect = reward_sum(r["dist_reward"], r["fair_reward"], r["goal_reward"], r["collision_penalty"])
        if r["total"] != expect:
            bad.append(f"agent {i} reward total {r['total']} != sum of terms {expect}")
        if abs(r["fair_reward"]) > ep.lam:
            bad.append(f"agent {i} fairness reward {r['fair_reward']} exceeds lambda {ep.lam}")
        fair_values.add(r["fair_reward"])
        if r["goal_reward"] != 0:
            if i in ep.paid_goal:
                bad.append(f"agent {i} paid a second goal reward")
            if i not in newly:
                bad.append(f"agent {i} paid a goal reward without arriving")
            ep.paid_goal.add(i)
    if len(fair_values) > 1:
        bad.append("fairness reward differs between agents")

    dom = rec.get("dominance")
    if dom is not None:
        if dom["oa_sum"] > dom["fa_sum"]:
            bad.append(f"dominance violated: OA sum {dom['oa_sum']} > FA sum {dom['fa_sum']}")
        if dom["fa_max"] > dom["oa_max"]:
            bad.append(f"dominance violated: FA max {dom['fa_max']} > OA max {dom['oa_max']}")

    ep.step = step if isinstance(step, int) else ep.step + 1
    for i, a in enumerate(agents):
        ep.distance[i] = a["d"]
        if a["done"]:
            ep.done[i] = True
            ep.parked.setdefault(i, a["p"])
    return bad


def validate_records(records: Iterable[dict]) -> list[Violation]:
    """Check reward identity, state invariants, and assignment dominance."""
    out: list[Violation] = []
    ep: Optional[_Episode] = None
    for rec in records:
        kind = rec.get("type")
        if kind == "episode":
            ep = _Episode(rec)
        elif kind == "step":
            if ep is None:
                out.append(Violation(rec.get("seed"), rec.get("step"), "step record before episode header"))
                continue
            out.extend(Violation(ep.seed, rec.get("step"), msg) for msg in _check_step(ep, rec))
        elif kind == "end":
            ep = None
        else:
            out.append(Violation(None, None, f"unknown record type {kind!r}"))
    return out


def validate_trace(path: str | Path) -> list[Violation]:
    return validate_records(read_trace(path))
