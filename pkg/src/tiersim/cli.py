"""Command line entry points: run, sweep, plan, check."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .config import ScenarioConfig, load_config, paper_config
from .harness import (monte_carlo, relative_degradation, run_scenario, sweep,
                      write_metrics, write_trace)
from .network import DelayDistribution, fit_loss_probability, plan_budget
from .stability import LyapunovTrace, check_decrease


def _load(args) -> ScenarioConfig:
    cfg = load_config(args.config) if args.config else paper_config()
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    if getattr(args, "runs", None) is not None:
        cfg = cfg.replace(runs=args.runs)
    return cfg


def _cmd_run(args) -> int:
    cfg = _load(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if cfg.runs > 1:
        agg = monte_carlo(cfg, workers=args.workers)
        write_metrics(out / "metrics.json", cfg, cfg.seed, agg.to_dict())
        print(f"runs={agg.runs} mean_cost={agg.mean_cost:.6g} "
              f"std={agg.std_cost:.3g} fractions={agg.mean_fractions}")
    trace, metrics = run_scenario(cfg, cfg.seed)
    if args.trace:
        write_trace(out / "trace.csv", cfg, cfg.seed, trace)
    write_metrics(out / "run_metrics.json", cfg, cfg.seed, metrics.to_dict())
    print(f"single run: cost={metrics.avg_stage_cost:.6g} "
          f"final_distance={metrics.final_distance:.3g} "
          f"sources={metrics.selection_fractions}")
    return 0


def _cmd_sweep(args) -> int:
    cfg = _load(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    results = sweep(cfg, workers=args.workers)
    table = {name: agg.to_dict() for name, agg in results.items()}
    write_metrics(out / "sweep.json", cfg, cfg.seed, table)
    width = max(len(n) for n in results)
    baseline = results.get("ideal-cloud")
    print(f"{'cell'.ljust(width)}  mean_cost     std        vs-ideal")
    for name, agg in results.items():
        rel = (f"{100 * relative_degradation(agg, baseline):+.2f}%"
               if baseline is not None else "n/a")
        print(f"{name.ljust(width)}  {agg.mean_cost:<12.6g}  {agg.std_cost:<9.4g}  {rel}")
    return 0


def _cmd_plan(args) -> int:
    if args.family == "exponential":
        dist = DelayDistribution("exponential", rate=args.rate)
    else:
        dist = DelayDistribution(args.family, mean=args.mean, std=args.std)
    budget = plan_budget(dist, args.rho)
    tail = fit_loss_probability(dist, budget)
    print(f"budget={budget} tail={tail:.6g} target={args.rho}")
    return 0


def _cmd_check(args) -> int:
    from .harness import read_trace
    data = read_trace(args.trace)
    trace = LyapunovTrace(vn=data["vn"], stage=data["stage"],
                          obstacle=np.zeros(len(data["vn"]), dtype=bool))
    cfg = load_config(args.config) if args.config else paper_config()
    report = check_decrease(trace, None, cfg.horizon, tolerance=args.tolerance)
    print(f"checked={report.checked} violations={report.violations} "
          f"max_residual={report.max_residual:.6g} slack={report.slack:.6g}")
    return 0 if report.violations == 0 else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="tiersim",
        description="Multi-tier control over lossy delayed links: simulator and tools")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one scenario (Monte Carlo if runs > 1)")
    p_run.add_argument("--config", type=str, default=None)
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--runs", type=int, default=None)
    p_run.add_argument("--out", type=str, default="out")
    p_run.add_argument("--workers", type=int, default=1)
    trace_group = p_run.add_mutually_exclusive_group()
    trace_group.add_argument("--trace", dest="trace", action="store_true", default=True)
    trace_group.add_argument("--no-trace", dest="trace", action="store_false")
    p_run.set_defaults(func=_cmd_run)

    p_sweep = sub.add_parser("sweep", help="run the scenario grid")
    p_sweep.add_argument("--config", type=str, default=None)
    p_sweep.add_argument("--seed", type=int, default=None)
    p_sweep.add_argument("--runs", type=int, default=None)
    p_sweep.add_argument("--out", type=str, default="out")
    p_sweep.add_argument("--workers", type=int, default=1)
    p_sweep.set_defaults(func=_cmd_sweep)

    p_plan = sub.add_parser("plan", help="compensation depth for a delay law")
    p_plan.add_argument("--family", choices=("exponential", "normal", "lognormal"),
                        required=True)
    p_plan.add_argument("--rate", type=float, default=1.0)
    p_plan.add_argument("--mean", type=float, default=0.0)
    p_plan.add_argument("--std", type=float, default=1.0)
    p_plan.add_argument("--rho", type=float, required=True)
    p_plan.set_defaults(func=_cmd_plan)

    p_check = sub.add_parser("check", help="decrease report for a saved trace")
    p_check.add_argument("--trace", type=str, required=True)
    p_check.add_argument("--config", type=str, default=None)
    p_check.add_argument("--tolerance", type=float, default=1e-7)
    p_check.set_defaults(func=_cmd_check)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
