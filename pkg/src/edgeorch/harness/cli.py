"""Command-line entry point: python -m edgeorch <command> [options]."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from ..agents import DQNAgent
from ..domain import SCENARIO_NAMES, THRESHOLD_ORDER, ConfigurationError, threshold_name
from ..oracle import oracle_rows, write_oracle_csv
from .calibrate import SHARED_SLOTS, calibrate, load_targets
from .evaluation import run_evaluation, train_sota
from .sweep import SweepBundle, SweepCell, default_configs, sweep
from .training import RunConfig, run_training
from .transfer import transfer_experiment


def _common(p: argparse.ArgumentParser, *, agent: bool = True) -> None:
    p.add_argument("--scenario", default="exp_a", help="exp_a..exp_d or a scenario JSON file")
    p.add_argument("--users", type=int, default=3)
    p.add_argument("--threshold", default="Max", help="Max, 89, 85, 80 or Min")
    if agent:
        p.add_argument("--agent", default="ql", choices=("ql", "dqn", "sota"))
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--budget", type=int, default=400_000, help="training step budget")
        p.add_argument("--params", default="{}", help="JSON object of hyper-parameter overrides")
    p.add_argument("--out", default="reports", help="output directory")
    p.add_argument("--strict", action="store_true",
                   help="exit non-zero on non-convergence or an accuracy violation")


def _config(args) -> RunConfig:
    return RunConfig(scenario=args.scenario, users=args.users, threshold=threshold_name(args.threshold),
                     agent=args.agent, seed=args.seed, budget=args.budget, params=json.loads(args.params))


def _tag(c: RunConfig) -> str:
    return f"{Path(c.scenario).stem}_n{c.users}_{c.threshold}_{c.agent}_s{c.seed}"


def _write(out: Path, name: str, text: str) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    (out / name).write_text(text)
    return out / name


def cmd_train(args) -> int:
    config = _config(args)
    report = run_training(config)
    out, tag = Path(args.out), _tag(config)
    _write(out, f"train_{tag}.csv", report.curve_csv())
    _write(out, f"train_{tag}.json", json.dumps(report.to_dict(), indent=2, sort_keys=True))
    model = report.agent.net if isinstance(report.agent, DQNAgent) else report.agent.table
    model.save(out / f"model_{tag}.json")
    print(f"{tag}: converged={report.converged} steps={report.steps_to_convergence} "
          f"prediction_accuracy={report.final_prediction_accuracy:.3f} wall={report.wall_clock_s:.1f}s")
    return 1 if args.strict and not report.converged else 0


def cmd_eval(args) -> int:
    config = _config(args)
    training = run_training(config, warm_from=args.model)
    sota = train_sota(config)
    cell = SweepCell(training, run_evaluation(config, training.agent, sota=sota.agent), sota)
    bundle = SweepBundle([cell])
    bundle.write(args.out, prefix=f"eval_{_tag(config)}")
    e = cell.evaluation
    print(f"decisions: {' '.join(str(a) for a in e.decisions)}")
    print(f"avg_response_ms={e.avg_response_ms:.2f} avg_accuracy_pct={e.avg_accuracy_pct:.2f} "
          f"sota_ms={e.sota_avg_response_ms:.2f} speedup={e.speedup_vs_sota:.3f}")
    return 1 if args.strict and not (training.converged and e.meets_threshold) else 0


def cmd_sweep(args) -> int:
    configs = default_configs(agents=args.agents, scenarios=args.scenarios,
                              thresholds=[threshold_name(t) for t in args.thresholds],
                              users=args.users, seed=args.seed, budget=args.budget)
    bundle = sweep(configs, compare_sota=not args.no_sota)
    bundle.write(args.out)
    for row in bundle.rows():
        print(f"{row['scenario']} N={row['users']} {row['threshold']} {row['agent']}: "
              f"converged={row['converged']} avg_ms={row['avg_response_ms']} "
              f"acc={row['avg_accuracy_pct']} speedup={row['speedup_vs_sota']}")
    ok = all(c.training.converged and c.evaluation.meets_threshold for c in bundle.cells)
    return 1 if args.strict and not ok else 0


def cmd_oracle(args) -> int:
    config = RunConfig(scenario=args.scenario, users=args.users, threshold=threshold_name(args.threshold))
    env = config.make_env()
    thresholds = THRESHOLD_ORDER if args.all_thresholds else [config.threshold]
    rows = oracle_rows(env, thresholds)
    text = write_oracle_csv(rows)
    _write(Path(args.out), f"oracle_{Path(args.scenario).stem}_n{args.users}.csv", text)
    sys.stdout.write(text)
    return 1 if args.strict and not all(r["feasible"] for r in rows) else 0


def cmd_calibrate(args) -> int:
    fixed, targets = load_targets(args.targets)
    fit = calibrate(targets, fixed=fixed, inference_slots=SHARED_SLOTS)
    out = Path(args.out)
    _write(out, "calibration.json", json.dumps(fit.table.to_dict(), indent=2) + "\n")
    _write(out, "calibration_residuals.txt", fit.report() + "\n")
    print(fit.report())
    return 1 if args.strict and fit.max_relative > args.tolerance else 0


def cmd_transfer(args) -> int:
    config = _config(args)
    report = transfer_experiment(config, source=args.source, source_threshold=args.source_threshold)
    out, tag = Path(args.out), _tag(config)
    _write(out, f"transfer_{tag}.csv", report.to_csv())
    _write(out, f"transfer_{tag}.json", json.dumps(report.to_dict(), indent=2, sort_keys=True))
    print(f"cold={report.cold.steps_to_convergence} warm={report.warm.steps_to_convergence} "
          f"speedup={report.speedup}")
    ok = report.cold.converged and report.warm.converged
    return 1 if args.strict and not ok else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="edgeorch", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one agent until convergence or budget")
    _common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="train, then evaluate greedily against baselines and SOTA")
    _common(p)
    p.add_argument("--model", default=None, help="warm-start file written by `train`")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="scenarios x thresholds x user counts x agents")
    p.add_argument("--scenarios", nargs="+", default=list(SCENARIO_NAMES))
    p.add_argument("--thresholds", nargs="+", default=list(THRESHOLD_ORDER))
    p.add_argument("--users", nargs="+", type=int, default=[1, 2, 3, 4, 5])
    p.add_argument("--agents", nargs="+", default=["ql"], choices=("ql", "dqn", "sota"))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--budget", type=int, default=400_000)
    p.add_argument("--no-sota", action="store_true", help="skip the SOTA comparison")
    p.add_argument("--out", default="reports")
    p.add_argument("--strict", action="store_true")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("oracle", help="brute-force optimal joint actions")
    _common(p, agent=False)
    p.add_argument("--all-thresholds", action="store_true")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("calibrate", help="fit the latency table to the shipped targets")
    p.add_argument("--targets", default=None, help="targets JSON (defaults to the shipped file)")
    p.add_argument("--tolerance", type=float, default=0.15)
    p.add_argument("--out", default="reports")
    p.add_argument("--strict", action="store_true")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("transfer", help="cold versus warm start at a target threshold")
    _common(p)
    p.add_argument("--source", default=None, help="warm-start file; trained at --source-threshold if absent")
    p.add_argument("--source-threshold", default="Min")
    p.set_defaults(func=cmd_transfer)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


__all__ = ["build_parser", "main"]
