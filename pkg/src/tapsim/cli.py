"""Command-line front end.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from tapsim import __version__
from tapsim.allocation import InfeasibleAllocation, allocation_surface, optimize_allocation
from tapsim.config import DEFAULT_LAMBDAS, PRESETS, ConfigError, ScenarioConfig, load_config, load_preset
from tapsim.engine import CellError, Simulation, sweep
from tapsim.metrics import fmt, to_csv
from tapsim.policies import ALL_POLICIES, PolicyKind

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2

log = logging.getLogger("tapsim")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _float_list(text: str) -> list[float]:
    try:
        values = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("empty list")
    return values


def _policy_list(text: str) -> list[PolicyKind]:
    if text.strip().lower() == "all":
        return list(ALL_POLICIES)
    out = []
    for name in text.split(","):
        try:
            out.append(PolicyKind(name.strip().upper()))
        except ValueError:
            choices = ", ".join(k.value for k in PolicyKind)
            raise argparse.ArgumentTypeError(f"unknown policy {name!r} (choose from {choices} or 'all')") from None
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tapsim", description="Simulate adaptive dispatching of jobs to hosts.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress and warnings")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add_source(p):
        src = p.add_mutually_exclusive_group(required=True)
        src.add_argument("-c", "--config", type=Path, help="scenario JSON file")
        src.add_argument("--preset", choices=PRESETS, help="bundled scenario")

    p_run = sub.add_parser("run", help="run one scenario")
    add_source(p_run)
    p_run.add_argument("-o", "--output", type=Path, required=True, help="output directory")
    p_run.add_argument("--seed", type=int, help="override the scenario seed")
    p_run.add_argument("--policy", type=lambda s: _policy_list(s)[0], help="override the policy kind")
    p_run.add_argument("--lambda", dest="lam", type=float, help="override the arrival rate (jobs/s)")
    p_run.add_argument("--json", action="store_true", help="also write a JSON report")
    p_run.add_argument("--rnn-trace", type=Path, help="write RNN state after every update as JSON lines")

    p_sweep = sub.add_parser("sweep", help="run a grid of rates x policies x repetitions")
    add_source(p_sweep)
    p_sweep.add_argument("--policies", type=_policy_list, default=list(ALL_POLICIES),
                         help="comma-separated policy kinds or 'all' (default all)")
    p_sweep.add_argument("--lambdas", type=_float_list, default=list(DEFAULT_LAMBDAS),
                         help="comma-separated arrival rates (default 1,2,4,8,12,16,20,25,30,40)")
    p_sweep.add_argument("--reps", type=int, default=1, help="repetitions per cell (default 1)")
    p_sweep.add_argument("--seed", type=int, help="override the base seed")
    p_sweep.add_argument("--jobs", type=int, default=1, help="cells run in parallel (default 1)")
    p_sweep.add_argument("-o", "--output", type=Path, required=True, help="output directory")

    p_opt = sub.add_parser("optimize", help="model-based split minimising predicted response time")
    add_source(p_opt)
    p_opt.add_argument("--lambda", dest="lam", type=float, required=True, help="total arrival rate (jobs/s)")
    p_opt.add_argument("--surface", type=Path, help="write the grid surface as CSV")
    p_opt.add_argument("--step", type=float, default=0.01, help="surface grid step (default 0.01)")
    return parser


def _load(args) -> ScenarioConfig:
    return load_preset(args.preset) if args.preset else load_config(args.config)


def cmd_run(args) -> int:
    cfg = _load(args)
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.lam is not None:
        changes["rate"] = args.lam
    cfg = cfg.replace(**changes)
    if args.policy is not None:
        cfg = cfg.with_policy(args.policy)

    sim = Simulation(cfg)
    trace_file = None
    if args.rnn_trace is not None:
        if not hasattr(sim.policy, "state"):
            raise UsageError("--rnn-trace needs an RNN policy")
        trace_file = open(args.rnn_trace, "w")
        sim.policy.trace = lambda state: trace_file.write(json.dumps({"t": sim.now, **state.to_dict()}) + "\n")
    try:
        report = sim.run()
    finally:
        if trace_file is not None:
            trace_file.close()

    args.output.mkdir(parents=True, exist_ok=True)
    (args.output / "results.csv").write_text(to_csv([report]))
    if args.json:
        (args.output / "results.json").write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
    if report.overflow:
        print(f"warning: host occupancy cap hit, {report.dropped} job(s) dropped", file=sys.stderr)
    print(f"{report.policy} lambda={fmt(report.lam)} jobs={report.jobs} "
          f"mean_et={fmt(report.et.mean)} mean_rt_ctrl={fmt(report.rt_ctrl.mean)}")
    return EXIT_OK


def _cell_name(policy: str, lam: float, rep: int) -> str:
    return f"{policy}_lam{fmt(lam)}_r{rep}"


def cmd_sweep(args) -> int:
    base = _load(args)
    if args.seed is not None:
        base = base.replace(seed=args.seed)
    if args.reps < 1:
        raise UsageError("--reps: must be >= 1")
    if any(lam <= 0 for lam in args.lambdas):
        raise UsageError("--lambdas: every rate must be > 0")
    out: Path = args.output
    cells_dir = out / "cells"
    cells_dir.mkdir(parents=True, exist_ok=True)
    total = len(args.lambdas) * len(args.policies) * args.reps
    done = 0

    def progress(cell, res):
        nonlocal done
        done += 1
        name = _cell_name(cell.policy.value, cell.lam, cell.rep)
        if isinstance(res, CellError):
            print(f"[{done}/{total}] {name} FAILED: {res.message}", file=sys.stderr, flush=True)
            return
        (cells_dir / f"{name}.json").write_text(json.dumps(res.to_dict(), indent=2, sort_keys=True) + "\n")
        print(f"[{done}/{total}] {name} jobs={res.jobs} mean_et={fmt(res.et.mean)}", file=sys.stderr, flush=True)

    results = sweep(base, args.lambdas, args.policies, args.reps, jobs=args.jobs, progress=progress)
    reports = [r for r in results if not isinstance(r, CellError)]
    (out / "sweep.csv").write_text(to_csv(reports))
    failed = len(results) - len(reports)
    if failed:
        print(f"{failed} of {total} cell(s) failed", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_optimize(args) -> int:
    cfg = _load(args)
    if not args.lam > 0:
        raise UsageError("--lambda: must be > 0")
    try:
        alloc = optimize_allocation(cfg.hosts, args.lam)
    except InfeasibleAllocation as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print("p = " + " ".join(f"{x:.6f}" for x in alloc.p))
    print(f"W = {alloc.w:.6g} s")
    if args.surface is not None:
        n = len(cfg.hosts)
        with open(args.surface, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([*(f"lambda_{i + 1}" for i in range(n)), "w"])
            for rates, value in allocation_surface(cfg.hosts, args.lam, args.step):
                w.writerow([*(fmt(x) for x in rates), fmt(value) if value != float("inf") else ""])
    return EXIT_OK


COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "optimize": cmd_optimize}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, UsageError) as exc:
        print(f"tapsim: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:
        log.debug("runtime failure", exc_info=True)
        print(f"tapsim: runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
