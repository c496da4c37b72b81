"""Command-line front end: ``safebench <command> [options]``.

Commands: gen-scenarios, run, sweep, phase, compare. Exit status is 0 on
success, 1 on a usage error and 2 on a runtime failure or an invalid episode.

Any long option can also come from an INI file passed with ``--config``.
Keys in ``[defaults]`` apply to every command and keys in a section named
after the command apply to it alone; flags given on the command line win.
"""
from __future__ import annotations

import argparse
import configparser
import sys
import warnings
from collections import defaultdict
from pathlib import Path

import numpy as np

from .controllers import Algorithm, ControllerConfig
from .dynamics import ModelKind, make_model
from .estimation import EstimationConfig
from .safety_index import SafetyIndexParams
from .benchmark.episode import default_human, simulate
from .benchmark.humans import HumanKind
from .benchmark.io import (
    FRONTIER_COLUMNS,
    POINT_COLUMNS,
    RESULT_COLUMNS,
    read_csv,
    result_row,
    write_csv,
    write_jsonl,
    write_phase_csv,
)
from .benchmark.metrics import MetricsReport
from .benchmark.phase import PhaseSlice, phase_portrait
from .benchmark.scenarios import generate_scenarios, load_scenarios, save_scenarios
from .benchmark.sweep import SweepSpec, tradeoff_sweep

EXIT_USAGE = 1
EXIT_RUNTIME = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be at least 1, got {value}")
    return value


def _float_list(text):
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None
    if not values:
        raise argparse.ArgumentTypeError("empty list")
    return values


def _add_controller_args(p, multi=True):
    choices = [a.value for a in Algorithm] + (["all"] if multi else [])
    p.add_argument("--alg", choices=choices, default="sss", help="safe controller")
    p.add_argument("--dmin", type=float, default=1.5, help="minimum safe distance d_min (m)")
    p.add_argument("--k", type=float, default=1.0, help="velocity weight k in phi (s)")
    p.add_argument("--c1", type=float, default=3.0, help="PFM gain")
    p.add_argument("--c2", type=float, default=3.0, help="SMA gain")
    p.add_argument("--eta", type=float, default=-1.0, help="SSA slack, <= 0")
    p.add_argument("--lambda", dest="lam", type=float, default=-1.0, help="BFM/SSS rate, < 0")


def _add_episode_args(p):
    p.add_argument("--model", choices=[m.value for m in ModelKind], default="ball")
    p.add_argument("--human", choices=[h.value for h in HumanKind], default="passive")
    p.add_argument("--scenarios", type=Path, help="scenario JSON file; generated from --seed/--count if absent")
    p.add_argument("--seed", type=int, default=0, help="master seed for generated scenarios")
    p.add_argument("--count", type=_positive_int, default=40, help="number of generated scenarios")
    p.add_argument("--perfect-sensing", action="store_true", help="bypass the Kalman filters")
    p.add_argument("--noise-sigma", type=float, default=0.01, help="position measurement noise (m)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="safebench", description="Safe-control benchmark harness.")
    parser.add_argument("--config", type=Path, help="INI file with option defaults")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-scenarios", help="write a scenario file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=_positive_int, default=40)
    p.add_argument("--model", choices=[m.value for m in ModelKind], default="ball",
                   help="sample goals in this model's reachable region")
    p.add_argument("--duration", type=float, default=30.0)
    p.add_argument("--fps", type=int, default=20)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("run", help="run episodes and write one CSV row per episode")
    _add_episode_args(p)
    _add_controller_args(p)
    p.add_argument("--out", type=Path, required=True, help="results CSV")
    p.add_argument("--logs", type=Path, help="directory for per-episode JSONL trajectories")

    p = sub.add_parser("sweep", help="parameter sweep, frontier and hybrid score")
    _add_episode_args(p)
    p.add_argument("--alg", choices=[a.value for a in Algorithm] + ["all"], default="sss")
    p.add_argument("--dmin-grid", type=_float_list, help="comma-separated d_min values")
    p.add_argument("--k-grid", type=_float_list, help="comma-separated k values")
    p.add_argument("--param-grid", type=_float_list, help="comma-separated values of the algorithm parameter")
    p.add_argument("--out", type=Path, required=True, help="output directory")

    p = sub.add_parser("phase", help="phase-portrait grid on a ball slice")
    _add_controller_args(p, multi=False)
    p.add_argument("--resolution", type=_positive_int, default=41)
    p.add_argument("--velocity", type=float, nargs=2, default=(1.0, 0.0), metavar=("VX", "VY"))
    p.add_argument("--extent", type=float, default=3.0, help="half-width of the square slice (m)")
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("compare", help="summarise results CSVs per algorithm")
    p.add_argument("results", type=Path, nargs="+")
    p.add_argument("--out", type=Path, help="summary CSV (stdout only if absent)")
    return parser


def _config_defaults(parser: argparse.ArgumentParser, path: Path, command: str) -> dict:
    ini = configparser.ConfigParser()
    if not ini.read(path):
        raise UsageError(f"cannot read config file {path}")
    sub = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction)).choices[command]
    actions = {}
    for action in sub._actions:
        for opt in action.option_strings:
            if opt.startswith("--"):
                actions[opt[2:].replace("-", "_")] = action
    values = {}
    for section in ("defaults", command):
        if not ini.has_section(section):
            continue
        for key, raw in ini.items(section):
            action = actions.get(key.replace("-", "_"))
            if action is None:
                if section == "defaults":
                    continue
                raise UsageError(f"unknown option {key!r} in [{section}] of {path}")
            if isinstance(action, argparse._StoreTrueAction):
                values[action.dest] = ini.getboolean(section, key)
            elif action.nargs in (2, "+"):
                values[action.dest] = [action.type(v) for v in raw.split()]
            else:
                try:
                    values[action.dest] = action.type(raw) if action.type else raw
                except (ValueError, argparse.ArgumentTypeError) as exc:
                    raise UsageError(f"bad value for {key!r} in {path}: {exc}") from None
            if action.choices is not None and values[action.dest] not in action.choices:
                raise UsageError(f"{key} must be one of {sorted(action.choices)}")
    return values


def _attach_grid_values(argv):
    # "-0.1,-10" does not look like a number to argparse, so bind it to its flag
    out, rest = [], list(argv)
    while rest:
        arg = rest.pop(0)
        if arg.startswith("--") and arg.endswith("-grid") and rest:
            arg = f"{arg}={rest.pop(0)}"
        out.append(arg)
    return out


def parse_args(argv) -> argparse.Namespace:
    argv = _attach_grid_values(argv)
    parser = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config", type=Path)
    pre.add_argument("command", nargs="?")
    known, _ = pre.parse_known_args(argv)
    sub = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction)).choices
    if known.config is not None and known.command in sub:
        try:
            defaults = _config_defaults(parser, known.config, known.command)
        except UsageError as exc:
            parser.exit(EXIT_USAGE, f"safebench: error: {exc}\n")
        sub[known.command].set_defaults(**defaults)
        # a required option may be satisfied by the file
        for action in sub[known.command]._actions:
            if action.dest in defaults:
                action.required = False
    return parser.parse_args(argv)


def _controller(args, algorithm) -> ControllerConfig:
    try:
        return ControllerConfig(Algorithm(algorithm), SafetyIndexParams(args.dmin, args.k),
                                c1=args.c1, c2=args.c2, eta=args.eta, lam=args.lam)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _scenarios(args, model):
    if args.scenarios is not None:
        return load_scenarios(args.scenarios)
    return generate_scenarios(args.seed, args.count, region=model.goal_annulus)


def _estimation(args) -> EstimationConfig:
    try:
        return EstimationConfig(perfect_sensing=args.perfect_sensing, noise_sigma=args.noise_sigma)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _algorithms(name):
    return list(Algorithm) if name == "all" else [Algorithm(name)]


def cmd_gen_scenarios(args) -> int:
    model = make_model(args.model)
    scenarios = generate_scenarios(args.seed, args.count, region=model.goal_annulus,
                                   duration=args.duration, fps=args.fps)
    save_scenarios(scenarios, args.out, args.seed)
    print(f"wrote {len(scenarios)} scenarios (seed {args.seed}) to {args.out}")
    return 0


def cmd_run(args) -> int:
    model = make_model(args.model)
    configs = [_controller(args, alg) for alg in _algorithms(args.alg)]
    estimation = _estimation(args)
    scenarios = _scenarios(args, model)
    human = default_human(model, args.human)
    rows = []
    invalid = 0
    for cfg in configs:
        logs = simulate(model, cfg, scenarios, human, estimation)
        for i, log in enumerate(logs):
            report = MetricsReport.from_log(log)
            rows.append(result_row(i, log, report))
            invalid += not log.valid
            if args.logs is not None:
                write_jsonl(args.logs / f"{model.kind.value}_{cfg.algorithm.value}_{i:03d}.jsonl", log)
    write_csv(args.out, RESULT_COLUMNS, rows)
    print(f"wrote {len(rows)} rows to {args.out}")
    if invalid:
        print(f"{invalid} episode(s) invalid (numerical blowup)", file=sys.stderr)
        return EXIT_RUNTIME
    return 0


def cmd_sweep(args) -> int:
    model = make_model(args.model)
    scenarios = _scenarios(args, model)
    estimation = _estimation(args)
    human = default_human(model, args.human)
    points, frontier, hybrid = [], [], []
    for alg in _algorithms(args.alg):
        grids = {}
        if args.dmin_grid:
            grids["d_min"] = args.dmin_grid
        if args.k_grid:
            grids["k"] = args.k_grid
        if args.param_grid:
            grids["parameter"] = args.param_grid
        try:
            spec = SweepSpec(model, alg, scenarios, human, estimation, **grids)
            spec.configs()  # validates every grid value
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        result = tradeoff_sweep(spec)
        for p in result.points:
            points.append({"algorithm": alg.value, "index": p.index, **p.params, "safety": p.safety,
                           "efficiency": p.efficiency, "collided": p.collided,
                           "collisions": p.collisions, "invalid": p.invalid})
        frontier.extend({"algorithm": alg.value, "safety": s, "efficiency": e} for s, e in result.frontier)
        hybrid.append({"algorithm": alg.value, "hybrid": "null" if result.hybrid is None else repr(result.hybrid)})
        print(f"{alg.value}: hybrid {hybrid[-1]['hybrid']}")
    write_csv(args.out / "points.csv", POINT_COLUMNS, points)
    write_csv(args.out / "frontier.csv", FRONTIER_COLUMNS, frontier)
    write_csv(args.out / "hybrid.csv", ("algorithm", "hybrid"), hybrid)
    return 0


def cmd_phase(args) -> int:
    cfg = _controller(args, args.alg)
    half = args.extent
    slice_ = PhaseSlice(x_range=(-half, half), y_range=(-half, half), velocity=tuple(args.velocity))
    grid = phase_portrait(cfg, slice_, args.resolution)
    write_phase_csv(args.out, grid)
    print(f"wrote {len(grid.x)} rows to {args.out}")
    return 0


def cmd_compare(args) -> int:
    groups = defaultdict(list)
    for path in args.results:
        for row in read_csv(path):
            groups[row["algorithm"]].append(row)
    columns = ("algorithm", "episodes", "efficiency", "safety", "collisions", "intervention_rate")
    summary = []
    for alg in sorted(groups):
        rows = groups[alg]
        summary.append({
            "algorithm": alg,
            "episodes": len(rows),
            "efficiency": float(np.mean([float(r["efficiency"]) for r in rows])),
            "safety": float(np.mean([float(r["safety"]) for r in rows])),
            "collisions": sum(r["collided"] == "true" for r in rows),
            "intervention_rate": float(np.mean([float(r["intervention_rate"]) for r in rows])),
        })
    for row in summary:
        print(f"{row['algorithm']:>5}  n={row['episodes']}  efficiency={row['efficiency']:.3f}  "
              f"safety={row['safety']:.3f}  collisions={row['collisions']}")
    if args.out is not None:
        write_csv(args.out, columns, summary)
    return 0


COMMANDS = {
    "gen-scenarios": cmd_gen_scenarios,
    "run": cmd_run,
    "sweep": cmd_sweep,
    "phase": cmd_phase,
    "compare": cmd_compare,
}


def main(argv=None) -> int:
    args = parse_args(sys.argv[1:] if argv is None else argv)
    try:
        with warnings.catch_warnings(), np.errstate(all="ignore"):
            warnings.simplefilter("ignore", RuntimeWarning)
            return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"safebench: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError, KeyError, ArithmeticError) as exc:
        print(f"safebench: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
