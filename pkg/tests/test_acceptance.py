"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

The lines are also repeated in the terminal summary under "acceptance criteria".
"""

import math
import random
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE, CONFIGS, euclid, state_from
from fairnav import config as cfgmod
from fairnav.assignment import CostMatrix, assign_minmax_fair, assign_optimal, brute_force_assign
from fairnav.cli import main
from fairnav.dynamics import step
from fairnav.fairness import fairness_metric
from fairnav.formation import (
    SHAPES,
    FormationSpec,
    expected_positions,
    lemniscate_parameters,
    on_shape,
)
from fairnav.observation import update_occupancy_flags
from fairnav.runner import Experiment, run_batch
from fairnav.trace import validate_records
from fairnav.world import Action, ScenarioConfig, WorldConfig, init_world

EPS = 1e-5


def report(number, title, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'}  criterion {number:>2}: {title} | {detail}"
    print(line)
    ACCEPTANCE.append(line)
    assert ok, line


@pytest.fixture(scope="module")
def instances():
    rng = np.random.default_rng(20240601)
    return {n: [CostMatrix(rng.random((n, n))) for _ in range(1000)] for n in range(2, 8)}


def test_criterion_01_solver_exactness(instances):
    start = time.perf_counter()
    bad = []
    for n, mats in instances.items():
        for k, c in enumerate(mats):
            if assign_optimal(c).total(c) != brute_force_assign(c, "sum").total(c):
                bad.append(("sum", n, k))
            if assign_minmax_fair(c).sorted_costs(c) != brute_force_assign(c, "lexmax").sorted_costs(c):
                bad.append(("lexmax", n, k))
    elapsed = time.perf_counter() - start
    report(1, "solver exactness", not bad and elapsed < 60,
           f"6000 instances, {len(bad)} mismatches, {elapsed:.1f}s (limit 60s)")


def test_criterion_02_assignment_dominance(instances):
    violations, strict5 = 0, 0
    for n, mats in instances.items():
        for c in mats:
            oa, fa = assign_optimal(c), assign_minmax_fair(c)
            if not (oa.total(c) <= fa.total(c) and fa.max_cost(c) <= oa.max_cost(c)):
                violations += 1
            if n == 5 and oa.total(c) < fa.total(c) and fa.max_cost(c) < oa.max_cost(c):
                strict5 += 1
    share = strict5 / len(instances[5])
    report(2, "assignment dominance", violations == 0 and share >= 0.10,
           f"{violations} violations; strict both sides on {100 * share:.1f}% of 5x5 (need >= 10%)")


def test_criterion_03_fairness_properties():
    rng = random.Random(3)
    perm_bad = zero_bad = 0
    for _ in range(2000):
        d = [rng.uniform(0, 10) for _ in range(rng.randint(2, 10))]
        shuffled = d[:]
        rng.shuffle(shuffled)
        perm_bad += fairness_metric(d, EPS).fairness != fairness_metric(shuffled, EPS).fairness
        same = [d[0]] * len(d)
        zero_bad += fairness_metric(same, EPS).fairness != d[0] / EPS

    # scale invariance over spreads from 1e-3 up, scale factors on both sides of 1
    worst, worst_case = 0.0, None
    for sigma_target in np.logspace(-3, 0, 31):
        for k in (0.5, 2.0, 10.0, 100.0):
            base = np.array([5.0, 5.0 + sigma_target * math.sqrt(2) * 2, 5.0 - sigma_target * math.sqrt(2) * 2]) / 2
            snap = fairness_metric(base, EPS)
            if min(snap.std, snap.std * k) < 1e-3:
                continue
            rel = abs(fairness_metric(base * k, EPS).fairness / snap.fairness - 1)
            if rel > worst:
                worst, worst_case = rel, (snap.std, k)
    f345 = fairness_metric([3, 4, 5], EPS).fairness
    ok = perm_bad == 0 and zero_bad == 0 and worst <= 1e-3 and abs(f345 - 4.8989) <= 1e-3
    report(3, "fairness metric properties", ok,
           f"permutation mismatches {perm_bad}; zero-spread mismatches {zero_bad}; "
           f"[3,4,5] -> {f345:.6f}; worst scale deviation {worst:.2e} at sigma={worst_case[0]:.2e}, "
           f"k={worst_case[1]:g} (limit 1e-3; eps alone moves F by eps*|k-1|/(k*sigma+eps))")


def test_criterion_04_reward_identity():
    exp = Experiment(ScenarioConfig(num_agents=5, num_obstacles=2, fairness_reward_enabled=True))
    result = run_batch(exp, 100, 0, trace=True)
    records = [r for ep in result.episodes for r in ep.trace]
    problems = validate_records(records)
    steps = [r for r in records if r["type"] == "step"]
    agent_steps = sum(len(r["rewards"]) for r in steps)
    lam = exp.fairness.lam
    fair_max = max(abs(rw["fair_reward"]) for r in steps for rw in r["rewards"])
    goal_counts = {}
    for r in steps:
        for i, rw in enumerate(r["rewards"]):
            if rw["goal_reward"]:
                goal_counts[(r["seed"], i)] = goal_counts.get((r["seed"], i), 0) + 1
    ok = not problems and fair_max <= lam and all(v == 1 for v in goal_counts.values())
    report(4, "reward identity", ok,
           f"{agent_steps} agent-steps, {len(problems)} violations, max |R_fair| {fair_max:.4f} <= {lam}, "
           f"{len(goal_counts)} goal rewards, max per agent {max(goal_counts.values(), default=0)}")


@pytest.fixture(scope="module")
def nav_batches():
    start = time.perf_counter()
    exp = Experiment(ScenarioConfig(num_agents=3))
    out = {p: run_batch(exp.with_variant(p), 100, 0) for p in ("oa", "fa")}
    return out, time.perf_counter() - start


def test_criterion_05_tradeoff_direction(nav_batches):
    batches, elapsed = nav_batches
    oa, fa = batches["oa"].summary.stats, batches["fa"].summary.stats
    ok = oa["D"].median <= fa["D"].median and fa["F"].median >= oa["F"].median and elapsed < 120
    report(5, "OA/FA tradeoff direction", ok,
           f"median D OA {oa['D'].median:.3f} <= FA {fa['D'].median:.3f}; "
           f"median F FA {fa['F'].median:.3f} >= OA {oa['F'].median:.3f}; {elapsed:.1f}s (limit 120s)")


def test_criterion_06_coverage_success(nav_batches):
    batches, _ = nav_batches
    s = batches["fa"].summary.stats["S_pct"].mean
    report(6, "coverage success", s >= 95, f"FA mean S% {s:.2f} over 100 episodes (need >= 95)")


def test_criterion_07_occupancy_flags():
    cfg = WorldConfig()
    rng = np.random.default_rng(7)
    mismatches = iff_bad = 0
    for seed in range(1000):
        n = int(rng.integers(2, 9))
        s = init_world(cfg, ScenarioConfig(num_agents=n, num_obstacles=int(rng.integers(0, 3))), seed)
        # move agents around; some land exactly on a goal center
        s.agent_pos = np.round(rng.uniform(-1, 1, size=(n, 2)), 6)
        on = rng.random(n) < 0.3
        s.agent_pos[on] = s.goal_pos[rng.integers(0, n, size=on.sum())]
        eta = update_occupancy_flags(s)
        for j, g in enumerate(s.goal_pos):
            d_min = min(euclid(g, a) for a in s.agent_pos)
            mismatches += eta[j] != min(max(1.0 - d_min, 0.0), 1.0)
            iff_bad += (eta[j] == 1.0) != any(a[0] == g[0] and a[1] == g[1] for a in s.agent_pos)
    report(7, "occupancy flags", mismatches == 0 and iff_bad == 0,
           f"1000 states, {mismatches} brute-force mismatches, {iff_bad} eta=1 iff-on-center failures")


def _zero_slack_failures():
    failures = {}
    for shape in SHAPES:
        worst = 0.0
        for n in range(1, 13):
            landmarks = ((-0.5, 0.0), (0.5, 0.0)) if shape == "line" else ((0.0, 0.0),)
            spec = FormationSpec(shape, landmarks, 0.5, n)
            for p in expected_positions(spec).points:
                if not on_shape(p, spec, threshold=1e-12):
                    worst = max(worst, _slack_needed(p, spec))
        if worst:
            failures[shape] = worst
    return failures


def _slack_needed(p, spec):
    lo, hi = 0.0, 1.0
    for _ in range(60):
        mid = (lo + hi) / 2
        lo, hi = (lo, mid) if on_shape(p, spec, threshold=mid) else (mid, hi)
    return hi


def test_criterion_08_formation_geometry():
    circle = expected_positions(FormationSpec("circle", ((0.0, 0.0),), 1.0, 4)).points
    circle_ok = np.max(np.abs(circle - [[1, 0], [0, 1], [-1, 0], [0, -1]])) <= 1e-12

    slack = _zero_slack_failures()

    lem_err = 0.0
    for n in range(1, 13):
        a = 0.4
        pts = expected_positions(FormationSpec("infinity", ((0.0, 0.0),), a, n)).points
        for p, t in zip(pts, lemniscate_parameters(n)):
            den = 1 + math.cos(t) ** 2
            lem_err = max(lem_err, abs(p[0] - a * math.sin(t) / den), abs(p[1] - a * math.sin(t) * math.cos(t) / den))

    success = {}
    for shape in SHAPES:
        loaded = cfgmod.load(CONFIGS / f"formation_{shape}.yaml")
        exp = cfgmod.with_agents(loaded.experiment, 5)
        success[shape] = run_batch(exp, loaded.episodes, loaded.seed).summary.stats["S_pct"].mean

    ok = circle_ok and not slack and lem_err <= 1e-12 and min(success.values()) >= 90
    slack_text = ", ".join(f"{k} needs slack {v:.3g}" for k, v in slack.items()) or "all on shape"
    report(8, "formation geometry", ok,
           f"circle n=4 exact: {circle_ok}; zero-slack predicate: {slack_text}; "
           f"lemniscate max error {lem_err:.1e}; S% at n=5: "
           + ", ".join(f"{k} {v:.1f}" for k, v in success.items()))


def test_criterion_09_determinism(tmp_path, monkeypatch):
    cfg = str(CONFIGS / "navigation.yaml")
    outputs = []
    for k, threads in enumerate(["1", "1", "8"]):
        monkeypatch.setenv("FAIRNAV_THREADS", threads)
        out, trace = tmp_path / f"r{k}.csv", tmp_path / f"t{k}.jsonl"
        code = main(["run", "--config", cfg, "--episodes", "20", "--seed", "5",
                     "--out", str(out), "--trace", str(trace)])
        assert code == 0
        outputs.append((out.read_bytes(), (tmp_path / f"r{k}_summary.csv").read_bytes(), trace.read_bytes()))
    same = outputs[0] == outputs[1] == outputs[2]
    report(9, "determinism", same,
           f"3 runs (1, 1, 8 workers): CSV, summary and trace byte-identical: {same}")


def test_criterion_10_dynamics():
    cfg = WorldConfig()
    s = state_from([[0.0, 0.0], [0.9, 0.9]], [[0.5, 0.5], [-0.5, -0.5]])
    new = step(s, [Action.ACCEL_PLUS_X, Action.NOOP], cfg).new_state
    v_ok = new.agent_vel[0].tolist() == [0.05, 0.0]
    # 0.005 has no exact double; p' must be the correctly rounded value of 0 + 0.05 * 0.1
    p_ok = new.agent_pos[0].tolist() == [0.0 + 0.05 * 0.1, 0.0]
    p_ulps = abs(new.agent_pos[0, 0] - 0.005) / math.ulp(0.005)

    rng = np.random.default_rng(10)
    fast = WorldConfig(accel_magnitude=4.0, episode_length=10**6)
    speed_bad = arena_bad = steps = 0
    s = init_world(fast, ScenarioConfig(num_agents=10, num_obstacles=2), 0)
    s.done[:] = False
    while steps < 100_000:
        s = step(s, rng.integers(0, 5, size=10), fast).new_state
        # keep every agent moving so all 1e5 agent-steps exercise the dynamics
        s.done[:] = False
        s.goal_claimed_by[:] = -1
        s.claimed_goal[:] = -1
        speed_bad += int(np.sum(np.hypot(s.agent_vel[:, 0], s.agent_vel[:, 1]) > fast.max_speed))
        arena_bad += int(np.sum(np.abs(s.agent_pos) > fast.world_half_extent))
        steps += 10
    ok = v_ok and p_ok and speed_bad == 0 and arena_bad == 0
    report(10, "dynamics", ok,
           f"v'={new.agent_vel[0].tolist()}, p'={new.agent_pos[0].tolist()} "
           f"({p_ulps:.0f} ulp from decimal 0.005); {steps} agent-steps, "
           f"{speed_bad} speed and {arena_bad} arena violations")
