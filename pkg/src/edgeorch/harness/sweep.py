"""Cross-product experiment sweeps with deterministic CSV and JSON reports."""

from __future__ import annotations

import csv
import io
import itertools
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

from ..domain import SCENARIO_NAMES, THRESHOLD_ORDER
from .evaluation import EvalReport, run_evaluation, train_sota
from .training import RunConfig, TrainingReport, run_training

SWEEP_COLUMNS = (
    "scenario", "users", "threshold", "agent", "seed", "converged", "steps_to_convergence",
    "steps_run", "final_prediction_accuracy", "decisions", "avg_response_ms", "avg_accuracy_pct",
    "meets_threshold", "sota_decisions", "sota_avg_response_ms", "sota_avg_accuracy_pct",
    "speedup_vs_sota", "DeviceOnly_ms", "EdgeOnly_ms", "CloudOnly_ms",
)


def _fmt(x, digits=4) -> str:
    return "" if x is None else f"{x:.{digits}f}"


@dataclass
class SweepCell:
    training: TrainingReport
    evaluation: EvalReport
    sota: TrainingReport | None = None

    def row(self) -> dict:
        c, t, e = self.training.config, self.training, self.evaluation
        return {
            "scenario": c.scenario, "users": c.users, "threshold": c.threshold, "agent": c.agent,
            "seed": c.seed, "converged": int(t.converged),
            "steps_to_convergence": "" if t.steps_to_convergence is None else t.steps_to_convergence,
            "steps_run": t.steps_run,
            "final_prediction_accuracy": _fmt(t.final_prediction_accuracy),
            "decisions": " ".join(str(a) for a in e.decisions),
            "avg_response_ms": _fmt(e.avg_response_ms), "avg_accuracy_pct": _fmt(e.avg_accuracy_pct),
            "meets_threshold": int(e.meets_threshold),
            "sota_decisions": "" if e.sota_decisions is None else " ".join(str(a) for a in e.sota_decisions),
            "sota_avg_response_ms": _fmt(e.sota_avg_response_ms),
            "sota_avg_accuracy_pct": _fmt(e.sota_avg_accuracy_pct),
            "speedup_vs_sota": _fmt(e.speedup_vs_sota),
            **{f"{k}_ms": _fmt(v) for k, v in e.baselines.items()},
        }


@dataclass
class SweepBundle:
    cells: list[SweepCell] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.cells)

    def rows(self) -> list[dict]:
        return [c.row() for c in self.cells]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=SWEEP_COLUMNS, lineterminator="\n")
        w.writeheader()
        w.writerows(self.rows())
        return buf.getvalue()

    def curves_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["scenario", "users", "threshold", "agent", "seed", "step", "epsilon",
                    "mean_reward", "oracle_agreement"])
        for cell in self.cells:
            c = cell.training.config
            for ch in cell.training.checks:
                w.writerow([c.scenario, c.users, c.threshold, c.agent, c.seed, ch.step,
                            f"{ch.epsilon:.6f}", f"{ch.mean_reward:.4f}", f"{ch.agreement:.4f}"])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps([{"training": c.training.to_dict(), "evaluation": c.evaluation.to_dict()}
                           for c in self.cells], indent=2, sort_keys=True)

    def write(self, out_dir: "str | Path", prefix: str = "sweep") -> list[Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        files = {f"{prefix}.csv": self.to_csv(), f"{prefix}_curves.csv": self.curves_csv(),
                 f"{prefix}.json": self.to_json()}
        for name, text in files.items():
            (out / name).write_text(text)
        return [out / name for name in files]


def default_configs(agents=("ql",), scenarios=SCENARIO_NAMES, thresholds=THRESHOLD_ORDER,
                    users=range(1, 6), seed: int = 0, budget: int = 400_000) -> list[RunConfig]:
    return [RunConfig(scenario=s, users=n, threshold=t, agent=a, seed=seed, budget=budget)
            for s, t, n, a in itertools.product(scenarios, thresholds, users, agents)]


def sweep(configs, *, compare_sota: bool = True) -> SweepBundle:
    """Train and evaluate each configuration in order.

    The offload-only agent always runs the top model, so its result does not
    depend on the accuracy threshold; one run is shared per scenario, user
    count and seed.
    """
    bundle = SweepBundle()
    sota_cache: dict = {}
    for config in configs:
        training = run_training(config)
        sota = None
        if compare_sota:
            key = (config.scenario, config.users, config.seed, config.budget)
            if key not in sota_cache:
                sota_cache[key] = train_sota(replace(config, threshold="Max"))
            sota = sota_cache[key]
        evaluation = run_evaluation(config, training.agent, sota=sota.agent if sota else None)
        bundle.cells.append(SweepCell(training, evaluation, sota))
    return bundle


__all__ = ["SWEEP_COLUMNS", "SweepBundle", "SweepCell", "default_configs", "sweep"]
