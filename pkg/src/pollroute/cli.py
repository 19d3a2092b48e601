"""Command-line front end.

Every subcommand prints a JSON summary on stdout and writes CSV tables into
the output directory (``--out``, default ``$POLLROUTE_OUT`` or the current
directory).  With ``--out -`` the CSV goes to stdout and the JSON to stderr.
A ``<subcommand>.manifest.json`` next to the CSV files records the flags,
output paths, version and wall time.

Exit codes: 0 success, 1 computation failure, 2 usage error.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import subprocess
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .equilibrium import fixed_point_mismatches, solve_equilibrium, verify_structure
from .fluid import (fluid_policy_simulate, lqr_trajectory, normalize_initial_state,
                    optimal_coefficients)
from .model import ModelError, ModelParams, ParameterError
from .simulator import (Curve, SimConfig, Table, compare_policies, parse_policy, simulate,
                        trace_csv)
from .social import alpha_coefficient, social_solve
from .static import (classify_no_info_nash, classify_no_info_social, classify_partial_nash,
                     classify_partial_social, no_info_cost, no_info_cost_gap, no_info_means,
                     partial_info_cost_diff, partial_info_costs, partial_info_means)

OUT_ENV = "POLLROUTE_OUT"
FIGURE2_DEFAULTS = {"lam": 0.3, "mu": 0.7, "c": 6.0, "d": 1.0}


class UsageError(Exception):
    pass


class CheckFailed(Exception):
    pass


def version_string() -> str:
    here = Path(__file__).resolve().parent
    try:
        desc = subprocess.run(["git", "describe", "--tags", "--always", "--dirty"], cwd=here,
                              capture_output=True, text=True, timeout=5)
        if desc.returncode == 0 and desc.stdout.strip():
            return f"{__version__}+{desc.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


class Output:
    """Collects CSV outputs for one run and writes them with the manifest."""

    def __init__(self, args, command: str):
        self.args = args
        self.command = command
        self.stream = args.out == "-"
        self.dir = None if self.stream else Path(args.out)
        self.paths: list[str] = []
        self.start = time.perf_counter()

    def csv(self, name: str, text: str):
        if self.stream:
            sys.stdout.write(f"# {name}\n{text}")
            return
        self.dir.mkdir(parents=True, exist_ok=True)
        path = self.dir / name
        path.write_text(text)
        self.paths.append(str(path))

    def text(self, name: str, text: str):
        self.csv(name, text)

    def finish(self, summary: dict):
        flags = {k: v for k, v in vars(self.args).items() if k != "func"}
        manifest = {"subcommand": self.command, "flags": flags, "outputs": self.paths,
                    "version": version_string(),
                    "wall_time": time.perf_counter() - self.start}
        if not self.stream:
            self.dir.mkdir(parents=True, exist_ok=True)
            (self.dir / f"{self.command}.manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
        summary = {**summary, "outputs": self.paths}
        dest = sys.stderr if self.stream else sys.stdout
        dest.write(json.dumps(_jsonable(summary)) + "\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and math.isinf(obj):
        return "inf" if obj > 0 else "-inf"
    return obj


def _params(args, require_costs: bool = True, defaults: dict | None = None) -> ModelParams:
    defaults = defaults or {}
    values = {}
    for key in ("lam", "mu", "c", "d"):
        v = getattr(args, key)
        if v is None:
            v = defaults.get(key)
        if v is None and key in ("c", "d") and not require_costs:
            v = 1.0 if key == "c" else 0.0
        if v is None:
            flag = "--lambda" if key == "lam" else f"--{key}"
            raise UsageError(f"{args.command}: {flag} is required")
        values[key] = v
    return ModelParams(values["lam"], values["mu"], values["c"], values["d"])


def _curve_csv(name: str, values) -> str:
    lines = [f"i,{name}"]
    lines += [f"{i},{int(v)}" for i, v in enumerate(values, start=1)]
    return "\n".join(lines) + "\n"


def _gnuplot_curves(csv_name: str, columns: list[str]) -> str:
    plots = ", ".join(f"'{csv_name}' using 1:{k + 2} with steps title '{c}'"
                      for k, c in enumerate(columns))
    return ("set datafile separator ','\nset key autotitle columnhead\n"
            "set xlabel 'i (busy queue)'\nset ylabel 'j (idle queue)'\n"
            f"plot {plots}, x with lines dashtype 2 title 'j = i'\npause -1\n")


def cmd_static(args) -> int:
    params = _params(args)
    out = Output(args, "static")
    summary = {"params": params.to_dict(), "regime": args.regime}
    if args.regime == "noinfo":
        social, nash = classify_no_info_social(params), classify_no_info_nash(params)
    else:
        social, nash = classify_partial_social(params), classify_partial_nash(params)
    if args.p is not None:
        summary["p"] = args.p
        if args.regime == "noinfo":
            m, cost = no_info_means(params, args.p), no_info_cost(params, args.p)
            summary.update(means=vars(m), cost=vars(cost), C1_minus_C2=no_info_cost_gap(params, args.p))
        else:
            m = partial_info_means(params, args.p)
            C, CB, CI = partial_info_costs(params, args.p)
            summary.update(means=vars(m), cost={"C": C, "C_B": CB, "C_I": CI},
                           C_B_minus_C_I=partial_info_cost_diff(params, args.p))
    else:
        nd = nash.to_dict()
        summary.update(
            nash=nd["policies"], nash_case=nd["case"], social=social.to_dict()["policies"],
            social_case=social.case, socially_optimal_equilibria=nd["socially_optimal"],
            mismatch=not nash.matches_social,
        )
    ps = np.linspace(0.0, 1.0, 21)
    if args.regime == "noinfo":
        rows = ["p,C,C1,C2"] + [f"{p!r},{k.C!r},{k.C1!r},{k.C2!r}"
                                for p, k in ((float(p), no_info_cost(params, float(p))) for p in ps)]
    else:
        rows = ["p,C,C_B,C_I"] + [f"{float(p)!r}," + ",".join(repr(v) for v in partial_info_costs(params, float(p)))
                                  for p in ps]
    out.csv(f"static_{args.regime}.csv", "\n".join(rows) + "\n")
    out.finish(summary)
    return 0


def cmd_individual(args) -> int:
    params = _params(args)
    out = Output(args, "individual")
    res = solve_equilibrium(params, args.imax, args.jmax, args.tol)
    report = verify_structure(res)
    summary = res.summary()
    summary["structure"] = report.to_dict()
    summary["fixed_point_mismatches"] = len(fixed_point_mismatches(res))
    out.csv("h.csv", _curve_csv("h", res.h.thresholds))
    out.csv("f_star.csv", res.f_star.to_csv())
    out.csv("tau.csv", res.tau.to_csv())
    if args.gnuplot:
        out.text("h.gp", _gnuplot_curves("h.csv", ["h"]))
    out.finish(summary)
    return 0


def cmd_social(args) -> int:
    params = _params(args, require_costs=False)
    out = Output(args, "social")
    res = social_solve(params, args.imax, args.jmax, args.tol)
    out.csv("g.csv", _curve_csv("g", res.g.thresholds))
    if res.value is not None:
        out.csv("value.csv", res.value.to_csv())
    if args.gnuplot:
        out.text("g.gp", _gnuplot_curves("g.csv", ["g"]))
    out.finish(res.summary())
    return 0


def cmd_fluid(args) -> int:
    params = _params(args, require_costs=False)
    out = Output(args, "fluid")
    # cycles are listed from the equivalent start with an empty idle queue
    start = normalize_initial_state(args.x0, args.y0, params)
    summary = lqr_trajectory(start.x, params).summary()
    summary["cycles_start"] = start._asdict()
    co = optimal_coefficients(params.rho)
    summary["alpha"] = co.alpha
    slope = co.alpha if params.c > params.d else 0.0
    run = fluid_policy_simulate(args.x0, args.y0, params, slope)
    summary["initial_state"] = {"x0": args.x0, "y0": args.y0}
    summary["total_cost"] = run.total_cost
    out.csv("trajectory.csv", run.to_csv())
    if args.gnuplot:
        out.text("trajectory.gp", "set datafile separator ','\nset key autotitle columnhead\n"
                 "plot 'trajectory.csv' using 1:2 with lines, '' using 1:3 with lines\npause -1\n")
    out.finish(summary)
    return 0


def _named_policy(spec: str, params: ModelParams, args):
    if spec == "social":
        res = social_solve(params, args.imax, args.jmax, args.tol)
        return Table(res.value.policy) if res.value is not None else Curve(res.g)
    if spec == "individual":
        return Table(solve_equilibrium(params, args.imax, args.jmax, args.tol).f_star)
    try:
        return parse_policy(spec)
    except (ValueError, OSError, KeyError) as exc:
        raise UsageError(f"bad --policy {spec!r}: {exc}") from exc


def cmd_simulate(args) -> int:
    params = _params(args)
    out = Output(args, "simulate")
    specs = args.policy or ["noinfo:0.5"]
    policies = {s: _named_policy(s, params, args) for s in specs}
    threads = args.threads or os.cpu_count() or 1
    if len(policies) == 1:
        (name, pol), = policies.items()
        cfg = SimConfig(params, pol, args.cycles, args.seed, args.warmup, workers=1 if args.trace else threads,
                        trace=args.trace)
        report = simulate(cfg)
        summary = report.to_dict(timing=False)
        summary["params"] = params.to_dict()
        if args.trace:
            out.csv("trace.csv", trace_csv(report))
    else:
        cmp_ = compare_policies(params, policies, args.cycles, args.seed, args.warmup, workers=threads)
        summary = cmp_.to_dict()
        summary["params"] = params.to_dict()
        summary["reports"] = {k: r.to_dict(timing=False) for k, r in cmp_.reports.items()}
    out.finish(summary)
    return 0


def figure2_curves(params: ModelParams, irange: int, grid: int, tol: float):
    """``(h, g, alpha)`` over ``i = 1..irange``."""
    grid = max(grid, 2 * irange)
    eq = solve_equilibrium(params, grid, grid, tol)
    soc = social_solve(params, grid, grid, tol)
    h = np.array([eq.h.threshold(i) for i in range(1, irange + 1)])
    g = np.array([soc.g.threshold(i) for i in range(1, irange + 1)])
    return h, g, alpha_coefficient(params.rho)


def cmd_figure2(args) -> int:
    params = _params(args, defaults=FIGURE2_DEFAULTS)
    if args.irange < 1:
        raise UsageError("--irange must be >= 1")
    out = Output(args, "figure2")
    h, g, alpha = figure2_curves(params, args.irange, args.imax, args.tol)
    i = np.arange(1, args.irange + 1)
    rows = ["i,h,g,alpha_i"] + [f"{k},{int(a)},{int(b)},{alpha * k!r}" for k, a, b in zip(i.tolist(), h, g)]
    out.csv("figure2.csv", "\n".join(rows) + "\n")
    if args.gnuplot:
        out.text("figure2.gp", "set datafile separator ','\nset key autotitle columnhead\n"
                 "plot 'figure2.csv' using 1:2 with steps, '' using 1:3 with steps, "
                 "'' using 1:4 with lines, x with lines dashtype 2 title 'j = i'\npause -1\n")
    h_below = bool(np.all(h < i))
    g_above = bool(np.all(g >= i))
    summary = {"params": params.to_dict(), "irange": args.irange, "alpha": alpha,
               "h": h.tolist(), "g": g.tolist(),
               "max_abs_g_minus_alpha_i": float(np.max(np.abs(g - alpha * i))),
               "h_below_diagonal": h_below, "g_above_diagonal": g_above}
    out.finish(summary)
    if not (h_below and g_above):
        raise CheckFailed("curve ordering around j = i violated")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--lambda", dest="lam", type=float, help="arrival rate")
    common.add_argument("--mu", type=float, help="service rate")
    common.add_argument("--c", type=float, help="holding cost per customer in the busy queue")
    common.add_argument("--d", type=float, help="holding cost per customer in the idle queue")
    common.add_argument("--imax", type=int, default=64, help="grid size in i (default 64)")
    common.add_argument("--jmax", type=int, default=64, help="grid size in j (default 64)")
    common.add_argument("--tol", type=float, default=1e-9, help="convergence tolerance")
    common.add_argument("--cycles", type=int, default=100_000, help="simulated regeneration cycles")
    common.add_argument("--seed", type=int, default=0, help="random seed")
    common.add_argument("--out", default=os.environ.get(OUT_ENV, "."),
                        help=f"output directory, '-' for stdout (default ${OUT_ENV} or .)")
    common.add_argument("--threads", type=int, default=0, help="worker processes (default: all cores)")
    common.add_argument("--gnuplot", action="store_true", help="also write a gnuplot script")

    parser = argparse.ArgumentParser(prog="pollroute", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("static", parents=[common], help="no-information / partial-information routing")
    p.add_argument("--regime", choices=["noinfo", "partial"], required=True)
    p.add_argument("--p", type=float, help="evaluate one split probability instead of classifying")
    p.set_defaults(func=cmd_static)

    p = sub.add_parser("individual", parents=[common], help="Nash routing with full information")
    p.set_defaults(func=cmd_individual)

    p = sub.add_parser("social", parents=[common], help="socially optimal routing with full information")
    p.set_defaults(func=cmd_social)

    p = sub.add_parser("fluid", parents=[common], help="optimal fluid policy")
    p.add_argument("--x0", type=float, default=1.0, help="initial busy-queue content")
    p.add_argument("--y0", type=float, default=0.0, help="initial idle-queue content")
    p.set_defaults(func=cmd_fluid)

    p = sub.add_parser("simulate", parents=[common], help="regenerative simulation")
    p.add_argument("--policy", action="append",
                   help="noinfo:P, partial:P, line:SLOPE, curve:CSV, table:CSV, social or individual; "
                        "repeat to compare policies")
    p.add_argument("--warmup", type=int, default=1000, help="discarded warm-up cycles")
    p.add_argument("--trace", action="store_true", help="write the event trace (large)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("figure2", parents=[common], help="the three switching curves side by side")
    p.add_argument("--irange", type=int, default=30, help="largest i (default 30)")
    p.set_defaults(func=cmd_figure2)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ParameterError) as exc:
        parser.error(str(exc))
    except CheckFailed as exc:
        print(f"pollroute: check failed: {exc}", file=sys.stderr)
        return 1
    except ModelError as exc:
        print(f"pollroute: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
