"""Command line front end: solve, analyze, sweep, simulate, export-lp.

Configuration comes from built-in defaults, overridden by an optional JSON
config file, overridden by explicit flags. Every command writes files that
are byte-identical across repeated runs of the same inputs.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .dynamics import Belief, ChannelParams, Discount, EconParams, ParameterError
from .lpmodel import build_all_kernels, export_lp
from .policy import (
    analyze_structure,
    diagonal_structure,
    extract_policy,
    export_policy_csv,
    export_policy_ppm,
    report_has_violations,
    save_structure_report,
)
from .simulate import BASELINES, SimConfig, run_episodes, save_summary, write_traces_csv
from .solver import (
    BeliefGrid,
    NonConvergence,
    SolverConfig,
    ValueFileError,
    load_value_field,
    save_value_field,
    solve,
)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NONCONVERGENCE = 3
EXIT_VIOLATIONS = 4
EXIT_IO = 5

DEFAULTS = {
    "lambda0": 0.1,
    "lambda1": 0.9,
    "beta": 0.9,
    "rh": 3.0,
    "rl": 2.0,
    "ch": 1.2,
    "cl": 0.8,
    "grid": 101,
    "tol": 1e-6,
    "max_iter": 5000,
    "seed": 0,
    "episodes": 10000,
    "horizon": 200,
}

SWEEP_PARAMS = (
    "lambda0", "lambda1", "beta", "rh", "rl", "ch", "cl", "rh_over_rl", "ch_over_cl",
)


def _add_param_flags(sp):
    for name in ("lambda0", "lambda1", "beta", "rh", "rl", "ch", "cl", "tol"):
        sp.add_argument(f"--{name}", type=float, default=None)
    sp.add_argument("--grid", type=int, default=None)
    sp.add_argument("--max-iter", dest="max_iter", type=int, default=None)
    sp.add_argument("--config", type=str, default=None, help="JSON config file; flags win")
    sp.add_argument("--out", type=str, default=".", help="output directory")


def _merge_config(args):
    cfg = dict(DEFAULTS)
    if getattr(args, "config", None):
        with open(args.config) as fh:
            loaded = json.load(fh)
        unknown = set(loaded) - set(DEFAULTS) - {"out"}
        if unknown:
            raise ParameterError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(loaded)
    for key in DEFAULTS:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    return cfg


def _params(cfg):
    ch = ChannelParams(cfg["lambda0"], cfg["lambda1"])
    econ = EconParams(cfg["rh"], cfg["rl"], cfg["ch"], cfg["cl"])
    discount = Discount(cfg["beta"])
    return ch, econ, discount


def _outdir(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_solve(args):
    cfg = _merge_config(args)
    ch, econ, discount = _params(cfg)
    grid = BeliefGrid(int(cfg["grid"]))
    result = solve(SolverConfig(discount, cfg["tol"], int(cfg["max_iter"])), ch, econ, grid)
    out = _outdir(args)
    save_value_field(out / "value.json", result, ch, econ, discount)
    policy = extract_policy(result.field, ch, econ, discount)
    diag = diagonal_structure(result.field, policy, ch, econ, discount)
    report = {
        "converged": True,
        "iterations": result.iterations,
        "residual": result.residual,
        "tol": cfg["tol"],
        "grid": grid.n,
        "params": {k: cfg[k] for k in ("lambda0", "lambda1", "beta", "rh", "rl", "ch", "cl")},
        "diagonal": {"kind": diag.kind, "rho1": diag.rho1, "rho2": diag.rho2},
    }
    with open(out / "solve_report.json", "w") as fh:
        json.dump(report, fh, indent=2)
        fh.write("\n")
    print(
        f"converged in {result.iterations} sweeps, residual {result.residual:.3e}; "
        f"diagonal: {diag.kind}"
    )
    return EXIT_OK


def cmd_analyze(args):
    result, ch, econ, discount = load_value_field(args.value_file)
    out = _outdir(args)
    policy = extract_policy(result.field, ch, econ, discount, args.tie_tol)
    export_policy_csv(policy, out / "policy.csv")
    export_policy_ppm(policy, out / "policy.ppm")
    report = analyze_structure(result.field, ch, econ, discount, args.tie_tol)
    save_structure_report(report, out / "structure.json")
    for name, ok in report.flags.items():
        print(f"{name}: {'pass' if ok else 'FAIL'}")
    print(
        f"diagonal: {report.diagonal.kind} "
        f"(rho1={report.diagonal.rho1}, rho2={report.diagonal.rho2}); "
        f"edges: th1={report.edges.th1}, th2={report.edges.th2}"
    )
    if report_has_violations(report):
        return EXIT_VIOLATIONS
    return EXIT_OK


def _sweep_values(start, stop, points):
    if points < 2:
        return [start]
    step = (stop - start) / (points - 1)
    return [start + k * step for k in range(points)]


def _sweep_point_config(cfg, param, value):
    point = dict(cfg)
    if param == "rh_over_rl":
        point["rh"] = value * point["rl"]
    elif param == "ch_over_cl":
        point["ch"] = value * point["cl"]
    else:
        point[param] = value
    return point


def cmd_sweep(args):
    cfg = _merge_config(args)
    if args.param not in SWEEP_PARAMS:
        raise ParameterError(f"unknown sweep parameter {args.param!r}; one of {SWEEP_PARAMS}")
    points = args.points
    if points is None:
        points = 8 if args.param.startswith("lambda") else 10
    out = _outdir(args)
    rows = []
    for value in _sweep_values(args.start, args.stop, points):
        point = _sweep_point_config(cfg, args.param, value)
        try:
            ch, econ, discount = _params(point)
            grid = BeliefGrid(int(point["grid"]))
            result = solve(
                SolverConfig(discount, point["tol"], int(point["max_iter"])), ch, econ, grid
            )
        except ParameterError as exc:
            print(f"skipping {args.param}={value:g}: {exc}", file=sys.stderr)
            continue
        except NonConvergence as exc:
            print(f"skipping {args.param}={value:g}: {exc}", file=sys.stderr)
            continue
        report = analyze_structure(result.field, ch, econ, discount)
        areas = report.areas
        rows.append(
            (
                value,
                areas["balanced"],
                areas["bet1"],
                areas["bet2"],
                areas["conservative"],
                report.diagonal.kind,
                report.diagonal.rho1,
                report.diagonal.rho2,
                report.edges.th1,
                report.edges.th2,
            )
        )
    path = out / "sweep.csv"
    with open(path, "w") as fh:
        fh.write(f"# sweep of {args.param}, {args.start:g} to {args.stop:g}, {points} points\n")
        fixed = {
            k: cfg[k]
            for k in ("lambda0", "lambda1", "beta", "rh", "rl", "ch", "cl", "grid", "tol")
            if k != args.param
        }
        fh.write("# fixed: " + " ".join(f"{k}={v:g}" for k, v in fixed.items()) + "\n")
        if args.param == "lambda1":
            fh.write(f"# note: lambda0 stays at {cfg['lambda0']:g} for the whole sweep\n")
        fh.write("swept-value,area_Bb,area_B1,area_B2,area_Br,class,rho1,rho2,Th1,Th2\n")
        for row in rows:
            cells = [repr(row[0])] + [repr(c) for c in row[1:5]] + [row[5]]
            cells += ["" if c is None else repr(c) for c in row[6:]]
            fh.write(",".join(cells) + "\n")
    print(f"swept {len(rows)} points -> {path}")
    return EXIT_OK


def cmd_simulate(args):
    if (args.value_file is None) == (args.baseline is None):
        raise ParameterError("exactly one of VALUE_FILE or --baseline is required")
    cfg = _merge_config(args)
    value_scale = None
    if args.value_file is not None:
        result, ch, econ, discount = load_value_field(args.value_file)
        policy = extract_policy(result.field, ch, econ, discount)
        value_scale = float(abs(result.field.values).max())
    else:
        ch, econ, discount = _params(cfg)
        policy = args.baseline
    sim_cfg = SimConfig(
        episodes=int(cfg["episodes"]),
        horizon=int(cfg["horizon"]),
        seed=int(cfg["seed"]),
        initial_belief=Belief(args.p1, args.p2),
    )
    out = _outdir(args)
    if args.dump_traces:
        summary, batch = run_episodes(
            policy, sim_cfg, ch, econ, discount, value_scale, collect_traces=True
        )
        write_traces_csv(batch, out / "traces.csv")
    else:
        summary = run_episodes(policy, sim_cfg, ch, econ, discount, value_scale)
    save_summary(summary, out / "sim_summary.json")
    print(
        f"{summary.policy}: mean {summary.mean:.6f} (se {summary.se:.6f}), "
        f"truncation bound {summary.truncation_bound:.3e}"
    )
    return EXIT_OK


def cmd_export_lp(args):
    cfg = _merge_config(args)
    ch, econ, discount = _params(cfg)
    grid = BeliefGrid(int(cfg["grid"]))
    kernels = build_all_kernels(grid, ch)
    out = _outdir(args)
    export_lp(out / "model.lp", grid, kernels, econ, discount, out / "model_meta.json")
    n_constraints = grid.n * grid.n * 4
    print(f"wrote model.lp ({grid.n * grid.n} variables, {n_constraints} constraints)")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="gepower",
        description="Solve, analyze, and simulate optimal power allocation "
        "over two good/bad Markov channels.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("solve", help="run value iteration, write value.json")
    _add_param_flags(sp)
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("analyze", help="policy map, structure report, structural checks")
    sp.add_argument("value_file")
    sp.add_argument("--tie-tol", dest="tie_tol", type=float, default=None)
    sp.add_argument("--out", type=str, default=".")
    sp.set_defaults(func=cmd_analyze)

    sp = sub.add_parser("sweep", help="solve+analyze across one swept parameter")
    _add_param_flags(sp)
    sp.add_argument("--param", required=True, choices=SWEEP_PARAMS)
    sp.add_argument("--start", type=float, required=True)
    sp.add_argument("--stop", type=float, required=True)
    sp.add_argument("--points", type=int, default=None)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("simulate", help="Monte Carlo a policy or baseline")
    sp.add_argument("value_file", nargs="?", default=None)
    sp.add_argument("--baseline", choices=BASELINES, default=None)
    _add_param_flags(sp)
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--episodes", type=int, default=None)
    sp.add_argument("--horizon", type=int, default=None)
    sp.add_argument("--p1", type=float, default=0.5)
    sp.add_argument("--p2", type=float, default=0.5)
    sp.add_argument("--dump-traces", dest="dump_traces", action="store_true")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("export-lp", help="write the LP model and metadata sidecar")
    _add_param_flags(sp)
    sp.set_defaults(func=cmd_export_lp)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ParameterError as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NonConvergence as exc:
        print(f"solver did not converge: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except json.JSONDecodeError as exc:
        print(
            f"parse error: {exc.msg} at line {exc.lineno}, column {exc.colno}",
            file=sys.stderr,
        )
        return EXIT_IO
    except ValueFileError as exc:
        print(f"bad value file: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"i/o failure: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
