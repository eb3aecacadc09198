import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fairnav.dynamics import step
from fairnav.observation import build_graph, observe
from fairnav.policy import (
    ControllerConfig,
    ExternalPolicy,
    PolicyInput,
    ProtocolError,
    decode_request,
    decode_response,
    desired_velocity,
    encode_request,
    external_policy_exchange,
    input_from_wire,
    input_to_wire,
    scripted_action,
)
from fairnav.world import ACTION_DIRECTIONS, Action, ScenarioConfig, WorldConfig, init_world

from conftest import state_from


def inputs_for(state, cfg, target_from_assignment=None):
    out = []
    for i in range(state.n_agents):
        target = None
        if target_from_assignment is not None:
            rel = state.goal_pos[target_from_assignment[i]] - state.agent_pos[i]
            target = (float(rel[0]), float(rel[1]))
        out.append(
            PolicyInput(observe(state, i, cfg), build_graph(state, i, cfg), i, state.step_index,
                        bool(state.done[i]), target)
        )
    return out


def oracle_action(v_des, v, cfg):
    """Score all five actions by the velocity error each would leave behind."""
    kick = cfg.accel_magnitude * cfg.dt
    best, best_err = None, math.inf
    for code in range(5):
        dv = kick * ACTION_DIRECTIONS[code]
        err = math.hypot(v_des[0] - v[0] - dv[0], v_des[1] - v[1] - dv[1])
        if err < best_err - 1e-15:
            best, best_err = code, err
    return best


def test_goal_straight_ahead(cfg):
    s = state_from([[0.0, 0.0], [0.9, 0.9]], [[0.5, 0.0], [-0.9, 0.9]])
    inp = inputs_for(s, cfg, (0, 1))[0]
    assert scripted_action(inp, ControllerConfig(), cfg) == Action.ACCEL_PLUS_X


def test_at_goal_is_noop(cfg):
    s = state_from([[0.5, 0.0], [0.9, 0.9]], [[0.5, 0.0], [-0.9, 0.9]])
    inp = inputs_for(s, cfg, (0, 1))[0]
    assert scripted_action(inp, ControllerConfig(), cfg) == Action.NOOP


def test_done_agent_is_noop(cfg):
    s = state_from([[0.0, 0.0], [0.9, 0.9]], [[0.5, 0.0], [-0.9, 0.9]])
    s.done[0] = True
    inp = inputs_for(s, cfg, (0, 1))[0]
    assert scripted_action(inp, ControllerConfig(), cfg) == Action.NOOP


def test_neighbor_ahead_matches_exhaustive_oracle(cfg):
    ctrl = ControllerConfig(avoid_gain=0.3)
    s = state_from([[0.0, 0.0], [0.15, 0.03]], [[0.6, 0.0], [0.6, 0.5]])
    inp = inputs_for(s, cfg, (0, 1))[0]
    # deflected desired velocity, recomputed by hand
    rel = np.array([0.15, 0.03])
    d = np.linalg.norm(rel)
    v_des = np.array([1.0, 0.0]) * cfg.max_speed - 0.3 * rel / d**3
    np.testing.assert_allclose(desired_velocity(inp, ctrl, cfg), v_des, rtol=1e-12)
    expected = oracle_action(v_des, (0.0, 0.0), cfg)
    assert scripted_action(inp, ctrl, cfg) == expected
    assert expected == Action.ACCEL_MINUS_X  # repulsion outweighs the pull at this range


def test_ego_goal1_mode_ignores_target(cfg):
    s = state_from([[0.0, 0.0], [0.9, 0.9]], [[0.0, 0.4], [0.0, -0.8]])
    inp = inputs_for(s, cfg, (1, 0))[0]
    assert scripted_action(inp, ControllerConfig(), cfg) == Action.ACCEL_MINUS_Y
    assert scripted_action(inp, ControllerConfig(target_mode="ego_goal1"), cfg) == Action.ACCEL_PLUS_Y


@settings(max_examples=500, deadline=None)
@given(st.integers(0, 100_000), st.integers(2, 6))
def test_scripted_matches_oracle_everywhere(seed, n):
    cfg = WorldConfig()
    s = init_world(cfg, ScenarioConfig(num_agents=n, num_obstacles=2), seed)
    rng = np.random.default_rng(seed)
    s.agent_vel[:] = rng.uniform(-0.1, 0.1, size=(n, 2))
    ctrl = ControllerConfig()
    for inp in inputs_for(s, cfg, tuple(range(n))):
        v_des = desired_velocity(inp, ctrl, cfg)
        err = np.linalg.norm(v_des - np.asarray(inp.ego.velocity))
        got = scripted_action(inp, ctrl, cfg)
        assert got == scripted_action(inp, ctrl, cfg)
        if err > cfg.accel_magnitude * cfg.dt / 2:
            assert got == oracle_action(v_des, inp.ego.velocity, cfg)
        else:
            assert got == Action.NOOP


def test_avoid_range_must_fit_sensing_radius():
    with pytest.raises(ValueError):
        ControllerConfig(avoid_range=0.6).check(WorldConfig(sensing_radius=0.5))
    with pytest.raises(ValueError):
        ControllerConfig(target_mode="teleport")


def test_graph_must_match_agent(cfg):
    s = state_from([[0.0, 0.0], [0.9, 0.9]], [[0.5, 0.0], [-0.9, 0.9]])
    with pytest.raises(ValueError):
        PolicyInput(observe(s, 0, cfg), build_graph(s, 1, cfg), 0, 0)


def test_single_agent_reaches_goal_within_bound():
    # one step saturates max_speed here; at the defaults the terminal speed
    # accel*dt/damping = 0.2 is far too slow for this bound
    cfg = WorldConfig(accel_magnitude=2.5, episode_length=1000)
    ctrl = ControllerConfig()
    for seed in range(100):
        s = init_world(cfg, ScenarioConfig(num_agents=1), seed)
        d0 = float(np.linalg.norm(s.agent_pos[0] - s.goal_pos[0]))
        bound = 3 * d0 / (cfg.max_speed * cfg.dt)
        while not s.done[0]:
            assert s.step_index <= bound, f"seed {seed}: not done after {s.step_index} steps"
            rel = s.goal_pos[0] - s.agent_pos[0]
            ego = observe_single(s, cfg)
            inp = PolicyInput(ego, build_graph(s, 0, cfg), 0, s.step_index, False, (float(rel[0]), float(rel[1])))
            s = step(s, [scripted_action(inp, ctrl, cfg)], cfg).new_state


def observe_single(state, cfg):
    from fairnav.observation import EgoObservation

    p, v, g = state.agent_pos[0], state.agent_vel[0], state.goal_pos[0]
    rel = g - p
    return EgoObservation((p[0], p[1]), (v[0], v[1]), (rel[0], rel[1]), state.occupancy[0], (rel[0], rel[1]), state.occupancy[0])


def test_wire_roundtrip(cfg):
    s = init_world(cfg, ScenarioConfig(num_agents=4, num_obstacles=2), 5)
    for inp in inputs_for(s, cfg, (3, 2, 1, 0)):
        back = input_from_wire(input_to_wire(inp), inp.step)
        assert back.ego.as_vector() == inp.ego.as_vector()
        assert back.graph == inp.graph
        assert (back.agent, back.step, back.done, back.target) == (inp.agent, inp.step, inp.done, inp.target)
    step_index, decoded = decode_request(encode_request(inputs_for(s, cfg), 0))
    assert step_index == 0 and len(decoded) == 4
    assert all(d.target is None for d in decoded)


def test_decode_response_checks():
    assert decode_response('{"actions": [0, 4, 2]}', 3) == [0, 4, 2]
    with pytest.raises(ProtocolError):
        decode_response('{"actions": [0, 4]}', 3)
    with pytest.raises(ProtocolError):
        decode_response('{"actions": [0, 5]}', 2)
    with pytest.raises(ProtocolError):
        decode_response('{"actions": [0, true]}', 2)
    with pytest.raises(ProtocolError):
        decode_response('{"actions": [0, 1.0]}', 2)
    with pytest.raises(ProtocolError):
        decode_response("not json", 2)
    with pytest.raises(ProtocolError):
        decode_response("[0, 1]", 2)


@pytest.fixture
def three_inputs(cfg):
    s = init_world(cfg, ScenarioConfig(num_agents=3), 0)
    return inputs_for(s, cfg)


def test_echo_stub_gives_noops(stub_cmd, three_inputs):
    with ExternalPolicy(stub_cmd("zeros.py")) as bridge:
        assert external_policy_exchange(bridge, three_inputs) == [Action.NOOP] * 3
        assert external_policy_exchange(bridge, three_inputs) == [Action.NOOP] * 3


@pytest.mark.parametrize("stub", ["short.py", "badcode.py", "garbage.py"])
def test_bad_responses_raise(stub_cmd, three_inputs, stub):
    with ExternalPolicy(stub_cmd(stub)) as bridge:
        with pytest.raises(ProtocolError):
            bridge.act(three_inputs, 0)


def test_timeout_raises(stub_cmd, three_inputs):
    with ExternalPolicy(stub_cmd("silent.py"), timeout=0.5) as bridge:
        with pytest.raises(ProtocolError, match="no response"):
            bridge.act(three_inputs, 0)


def test_exited_process_raises(three_inputs):
    import sys

    with ExternalPolicy([sys.executable, "-c", "pass"], timeout=5) as bridge:
        with pytest.raises(ProtocolError):
            bridge.act(three_inputs, 0)


def test_act_before_start(three_inputs):
    with pytest.raises(ProtocolError):
        ExternalPolicy(["true"]).act(three_inputs, 0)
