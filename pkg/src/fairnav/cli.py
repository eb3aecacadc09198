"""Command-line entry point: run, bench, formation, assign, validate."""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import config as cfgmod
from .assignment import CostMatrix, solve
from .policy import ProtocolError
from .runner import METRICS, VARIANT_PRESETS, BatchResult, Experiment, run_batch
from .trace import validate_trace, write_trace
from .world import PlacementError

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_USAGE = 2
EXIT_RUNTIME = 3

DEFAULT_BENCH_AGENTS = (3, 5, 7, 10)
ROW_HEADER = ["seed", "F", "S_pct", "T", "D", "collisions"]
SUMMARY_STATS = ("median", "mean", "p10", "p90")


class UsageError(Exception):
    pass


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _agent_list(text: str) -> list[int]:
    try:
        values = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not values or any(v < 1 for v in values):
        raise argparse.ArgumentTypeError("agent counts must be positive")
    return values


def _on_off(text: str) -> bool:
    if text not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected 'on' or 'off'")
    return text == "on"


_POLICY_FLAGS = {"scripted-ego": "scripted-ego", "scripted-assigned": "scripted-assigned", "external": "external"}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fairnav", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, agents_help):
        p.add_argument("--config", help="YAML config file")
        p.add_argument("--episodes", type=_positive_int)
        p.add_argument("--seed", type=int, help="base seed (episode k uses seed + k)")
        p.add_argument("--agents", type=_agent_list, help=agents_help)
        p.add_argument("--policy", choices=sorted(_POLICY_FLAGS))
        p.add_argument("--external-cmd", help="command line of an external policy process")

    for name, text in (("run", "run a batch of episodes"), ("formation", "run formation episodes")):
        p = sub.add_parser(name, help=text)
        common(p, "number of agents")
        p.add_argument("--assign", choices=["random", "optimal", "minmax"])
        p.add_argument("--fair-reward", type=_on_off, metavar="{on,off}")
        p.add_argument("--out", default=f"fairnav_{name}.csv", help="per-episode CSV path")
        p.add_argument("--trace", help="write a per-step JSON-lines trace here")

    p = sub.add_parser("bench", help="sweep agent counts x model variants")
    common(p, "comma-separated agent counts (default 3,5,7,10)")
    p.add_argument("--out", default="fairnav_bench", help="output directory")

    p = sub.add_parser("assign", help="solve one assignment problem from a cost-matrix file")
    p.add_argument("matrix", help="text file, one row per line, whitespace-separated costs")
    p.add_argument("--assign", choices=["random", "optimal", "minmax"], default="minmax")
    p.add_argument("--seed", type=int, default=0, help="seed for random assignment")

    p = sub.add_parser("validate", help="check a trace file")
    p.add_argument("trace_file", nargs="?", help="trace path (or use --trace)")
    p.add_argument("--trace", help="trace path")
    return parser


def _overrides(args) -> dict:
    agents = getattr(args, "agents", None)
    if agents is not None and args.command != "bench":
        if len(agents) != 1:
            raise UsageError(f"{args.command} takes a single agent count")
        agents = agents[0]
    else:
        agents = None
    return {
        "episodes": args.episodes,
        "seed": args.seed,
        "num_agents": agents,
        "assignment_mode": getattr(args, "assign", None),
        "fairness_reward_enabled": getattr(args, "fair_reward", None),
        "policy": args.policy,
        "external_cmd": args.external_cmd,
    }


def _fmt(x) -> str:
    return repr(float(x)) if isinstance(x, (float, np.floating)) else str(x)


def write_rows(path: Path, rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ROW_HEADER)
        for r in rows:
            w.writerow([_fmt(r[k]) for k in ROW_HEADER])


def _summary_fields() -> list[str]:
    return ["model", "agents", "episodes"] + [f"{m}_{s}" for m in METRICS for s in SUMMARY_STATS]


def _summary_record(result: BatchResult) -> list[str]:
    s = result.summary
    out = [s.label, str(s.n_agents), str(s.episodes)]
    for m in METRICS:
        stats = s.stats[m]
        out += [_fmt(getattr(stats, name)) for name in SUMMARY_STATS]
    return out


def write_summaries(path: Path, results: Sequence[BatchResult]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(_summary_fields())
        for r in results:
            w.writerow(_summary_record(r))


def format_table(results: Sequence[BatchResult]) -> str:
    """Table with median F, mean S%, median T, median D per model."""
    lines = [f"{'agents':>6}  {'model':<6} {'F':>8} {'S%':>7} {'T':>6} {'D':>7}"]
    for r in results:
        row = r.summary.table_row()
        lines.append(
            f"{row['agents']:>6}  {row['model']:<6} {row['F']:>8.3f} {row['S_pct']:>7.2f} "
            f"{row['T']:>6.3f} {row['D']:>7.3f}"
        )
    return "\n".join(lines)


def _summary_path(out: Path) -> Path:
    return out.with_name(out.stem + "_summary.csv")


def _run_and_write(exp: Experiment, episodes: int, seed: int, out: str, trace: Optional[str]) -> int:
    result = run_batch(exp, episodes, seed, trace=trace is not None)
    out_path = Path(out)
    write_rows(out_path, result.rows)
    write_summaries(_summary_path(out_path), [result])
    if trace is not None:
        write_trace(trace, (rec for ep in result.episodes for rec in ep.trace))
    print(format_table([result]))
    return EXIT_OK


def cmd_run(args) -> int:
    loaded = cfgmod.load(args.config, _overrides(args))
    if loaded.experiment.scenario.formation is not None:
        raise cfgmod.ConfigError("config has a formation block; use the 'formation' subcommand")
    return _run_and_write(loaded.experiment, loaded.episodes, loaded.seed, args.out, args.trace)


def cmd_formation(args) -> int:
    loaded = cfgmod.load(args.config, _overrides(args))
    if loaded.experiment.scenario.formation is None:
        raise cfgmod.ConfigError("formation needs a 'scenario.formation' block in the config")
    return _run_and_write(loaded.experiment, loaded.episodes, loaded.seed, args.out, args.trace)


def cmd_bench(args) -> int:
    loaded = cfgmod.load(args.config, _overrides(args))
    counts = args.agents or list(DEFAULT_BENCH_AGENTS)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    results = []
    for n in counts:
        for preset in VARIANT_PRESETS:
            exp = cfgmod.with_agents(loaded.experiment, n).with_variant(preset)
            result = run_batch(exp, loaded.episodes, loaded.seed)
            write_rows(out_dir / f"episodes_n{n}_{preset}.csv", result.rows)
            results.append(result)
    write_summaries(out_dir / "bench_summary.csv", results)
    print(format_table(results))
    return EXIT_OK


def read_matrix(path: str) -> CostMatrix:
    rows = []
    try:
        with open(path) as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    rows.append([float(x) for x in line.split()])
                except ValueError:
                    raise cfgmod.ConfigError(f"{path}:{lineno}: non-numeric entry") from None
    except OSError as exc:
        raise cfgmod.ConfigError(f"cannot read {path}: {exc}") from None
    if not rows or any(len(r) != len(rows) for r in rows):
        raise cfgmod.ConfigError(f"{path}: cost matrix must be square and non-empty")
    try:
        return CostMatrix(np.array(rows))
    except ValueError as exc:
        raise cfgmod.ConfigError(f"{path}: {exc}") from None


def cmd_assign(args) -> int:
    c = read_matrix(args.matrix)
    a = solve(c, args.assign, seed=args.seed)
    print(f"mode: {a.mode}")
    print("goal_of: " + " ".join(str(g) for g in a.goal_of))
    print(f"sum: {_fmt(a.total(c))}")
    print(f"max: {_fmt(a.max_cost(c))}")
    print("sorted_desc: " + " ".join(_fmt(x) for x in a.sorted_costs(c)))
    return EXIT_OK


def cmd_validate(args) -> int:
    path = args.trace or args.trace_file
    if not path:
        raise UsageError("validate needs a trace file")
    try:
        problems = validate_trace(path)
    except (OSError, ValueError, KeyError, TypeError) as exc:
        print(f"fairnav: cannot validate {path}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    if problems:
        print(f"fairnav: first violation: {problems[0]}", file=sys.stderr)
        print(f"fairnav: {len(problems)} violation(s) in total", file=sys.stderr)
        return EXIT_INVALID
    print(f"{path}: clean")
    return EXIT_OK


COMMANDS = {
    "run": cmd_run,
    "bench": cmd_bench,
    "formation": cmd_formation,
    "assign": cmd_assign,
    "validate": cmd_validate,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (UsageError, cfgmod.ConfigError) as exc:
        print(f"fairnav: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ProtocolError, PlacementError) as exc:
        print(f"fairnav: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
