"""Policy contract, the scripted controller, and the external-process policy bridge.

Wire format (one JSON object per line on the child's stdin/stdout):

    request:  {"step": int,
               "agents": [{"id": int,
                           "ego": [px, py, vx, vy, g1x, g1y, eta1, g2x, g2y, eta2],
                           "graph": {"nodes": [{"id": int, "type": str, "x": [8 floats]}],
                                     "edges": [[src, dst], ...]},
                           "done": bool}, ...]}
    response: {"actions": [int, ...]}   # one code per agent, 0..4

An agent entry carries an extra "target": [dx, dy] only when the harness
supplies an assigned goal.
"""

from __future__ import annotations

import json
import queue
import shlex
import subprocess
import threading
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .observation import ENTITY_AGENT, ENTITY_OBSTACLE, EgoObservation, EntityGraph, GraphNode
from .world import ACTION_DIRECTIONS, Action, WorldConfig

TARGET_MODES = ("ego_goal1", "fixed_assignment")
DEFAULT_TIMEOUT = 10.0


class ProtocolError(RuntimeError):
    """The external policy process broke the request/response contract."""


@dataclass(frozen=True)
class PolicyInput:
    ego: EgoObservation
    graph: EntityGraph
    agent: int
    step: int
    done: bool = False
    # assigned goal relative to the agent; only set in fixed_assignment runs
    target: Optional[tuple[float, float]] = None

    def __post_init__(self):
        if self.graph.ego_id != self.agent:
            raise ValueError(f"graph belongs to agent {self.graph.ego_id}, not {self.agent}")


@dataclass(frozen=True)
class ControllerConfig:
    target_mode: str = "fixed_assignment"
    avoid_gain: float = 0.03
    avoid_range: float = 0.3

    def __post_init__(self):
        if self.target_mode not in TARGET_MODES:
            raise ValueError(f"target_mode must be one of {TARGET_MODES}")
        if self.avoid_gain < 0 or self.avoid_range < 0:
            raise ValueError("avoid_gain and avoid_range must be non-negative")

    def check(self, world_cfg: WorldConfig) -> None:
        if self.avoid_range > world_cfg.sensing_radius:
            raise ValueError("avoid_range must not exceed the sensing radius")


def _parked(node: GraphNode, inp: PolicyInput, world_cfg: WorldConfig) -> bool:
    """A neighbor standing still on its nearest goal (a finished agent)."""
    f = node.features
    speed = np.hypot(f[2] + inp.ego.velocity[0], f[3] + inp.ego.velocity[1])
    on_goal = np.hypot(f[4] - f[0], f[5] - f[1]) <= world_cfg.done_threshold
    return bool(speed == 0.0 and on_goal)


def desired_velocity(inp: PolicyInput, cfg: ControllerConfig, world_cfg: WorldConfig) -> np.ndarray:
    if cfg.target_mode == "fixed_assignment" and inp.target is not None:
        to_goal = np.asarray(inp.target, dtype=float)
    else:
        to_goal = np.asarray(inp.ego.goal1_rel, dtype=float)
    dist = float(np.linalg.norm(to_goal))
    v = to_goal / dist * world_cfg.max_speed if dist > 0 else np.zeros(2)

    push = np.zeros(2)
    for node in inp.graph.nodes:
        if node.entity_id == inp.agent:
            continue
        code = int(node.features[7])
        if code not in (ENTITY_AGENT, ENTITY_OBSTACLE):
            continue
        rel = np.asarray(node.features[:2])
        if code == ENTITY_AGENT and _parked(node, inp, world_cfg):
            continue
        d = float(np.linalg.norm(rel))
        if 0 < d <= cfg.avoid_range:
            push -= rel / d / d**2
    return v + cfg.avoid_gain * push


def scripted_action(inp: PolicyInput, cfg: ControllerConfig, world_cfg: WorldConfig) -> Action:
    """The action whose velocity change leaves the smallest error to the desired velocity."""
    if inp.done:
        return Action.NOOP
    error = desired_velocity(inp, cfg, world_cfg) - np.asarray(inp.ego.velocity)
    if float(np.linalg.norm(error)) <= world_cfg.accel_magnitude * world_cfg.dt / 2:
        return Action.NOOP
    kick = world_cfg.accel_magnitude * world_cfg.dt
    residual = np.linalg.norm(error - kick * ACTION_DIRECTIONS, axis=1)
    return Action(int(np.argmin(residual)))  # first minimum: lowest action code wins ties


def input_to_wire(inp: PolicyInput) -> dict:
    out = {
        "id": inp.agent,
        "ego": inp.ego.as_vector(),
        "graph": {
            "nodes": [
                {"id": node.entity_id, "type": node.entity_type, "x": list(node.features)}
                for node in inp.graph.nodes
            ],
            "edges": [list(e) for e in inp.graph.edges],
        },
        "done": inp.done,
    }
    if inp.target is not None:
        out["target"] = list(inp.target)
    return out


def input_from_wire(obj: dict, step: int) -> PolicyInput:
    agent = int(obj["id"])
    graph = EntityGraph(
        ego_id=agent,
        nodes=tuple(
            GraphNode(int(n["id"]), str(n["type"]), tuple(float(x) for x in n["x"]))
            for n in obj["graph"]["nodes"]
        ),
        edges=tuple((int(s), int(d)) for s, d in obj["graph"]["edges"]),
    )
    target = obj.get("target")
    return PolicyInput(
        ego=EgoObservation.from_vector(obj["ego"]),
        graph=graph,
        agent=agent,
        step=step,
        done=bool(obj.get("done", False)),
        target=None if target is None else (float(target[0]), float(target[1])),
    )


def encode_request(inputs: Sequence[PolicyInput], step: int) -> str:
    return json.dumps({"step": step, "agents": [input_to_wire(i) for i in inputs]})


def decode_request(line: str) -> tuple[int, list[PolicyInput]]:
    msg = json.loads(line)
    step = int(msg["step"])
    return step, [input_from_wire(a, step) for a in msg["agents"]]


def decode_response(line: str, n: int) -> list[int]:
    try:
        msg = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"malformed response: {exc}") from None
    if not isinstance(msg, dict) or not isinstance(msg.get("actions"), list):
        raise ProtocolError("response must be an object with an 'actions' list")
    actions = msg["actions"]
    if len(actions) != n:
        raise ProtocolError(f"expected {n} actions, got {len(actions)}")
    out = []
    for a in actions:
        if isinstance(a, bool) or not isinstance(a, int) or not 0 <= a < len(Action):
            raise ProtocolError(f"action code {a!r} outside 0..{len(Action) - 1}")
        out.append(a)
    return out


class ExternalPolicy:
    """Drives agents from a child process speaking the line protocol.

    One request line is written per step and exactly one response line is
    awaited; any timeout, early exit or malformed reply raises ProtocolError.
    """

    def __init__(self, command: str | Sequence[str], timeout: float = DEFAULT_TIMEOUT):
        self.command = shlex.split(command) if isinstance(command, str) else list(command)
        self.timeout = timeout
        self._proc: Optional[subprocess.Popen] = None
        self._lines: "queue.Queue[Optional[str]]" = queue.Queue()

    def start(self) -> "ExternalPolicy":
        self._proc = subprocess.Popen(
            self.command,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            text=True,
            bufsize=1,
        )
        threading.Thread(target=self._pump, args=(self._proc.stdout,), daemon=True).start()
        return self

    def _pump(self, stream) -> None:
        for line in stream:
            self._lines.put(line)
        self._lines.put(None)

    def act(self, inputs: Sequence[PolicyInput], step: int) -> list[int]:
        if self._proc is None:
            raise ProtocolError("external policy not started")
        try:
            self._proc.stdin.write(encode_request(inputs, step) + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise ProtocolError(f"external policy closed its input: {exc}") from None
        try:
            line = self._lines.get(timeout=self.timeout)
        except queue.Empty:
            raise ProtocolError(f"no response within {self.timeout} s at step {step}") from None
        if line is None:
            raise ProtocolError(f"external policy exited before answering step {step}")
        return decode_response(line, len(inputs))

    def close(self) -> None:
        if self._proc is None:
            return
        proc, self._proc = self._proc, None
        try:
            proc.stdin.close()
        except OSError:
            pass
        try:
            proc.wait(timeout=2)
        except subprocess.TimeoutExpired:
            proc.kill()
            proc.wait()

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.close()


def external_policy_exchange(bridge: ExternalPolicy, inputs: Sequence[PolicyInput]) -> list[Action]:
    step = inputs[0].step if inputs else 0
    return [Action(a) for a in bridge.act(inputs, step)]
