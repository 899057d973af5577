"""Cold-start versus warm-start training at a target accuracy threshold."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, replace

from .training import RunConfig, TrainingReport, run_training


@dataclass
class TransferReport:
    source: TrainingReport | None
    cold: TrainingReport
    warm: TrainingReport

    @property
    def speedup(self) -> float | None:
        """Cold over warm convergence steps.

        Convergence is only observed at check points, so a warm run that is
        already converged at step 0 counts as one check interval.
        """
        if not (self.cold.converged and self.warm.converged):
            return None
        floor = self.warm.config.check_every
        return self.cold.steps_to_convergence / max(self.warm.steps_to_convergence, floor)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["run", "scenario", "users", "threshold", "agent", "seed", "converged",
                    "steps_to_convergence", "steps_run"])
        runs = [("source", self.source), ("cold", self.cold), ("warm", self.warm)]
        for name, r in runs:
            if r is None:
                continue
            c = r.config
            w.writerow([name, c.scenario, c.users, c.threshold, c.agent, c.seed, int(r.converged),
                        "" if r.steps_to_convergence is None else r.steps_to_convergence, r.steps_run])
        s = self.speedup
        w.writerow(["speedup", "", "", "", "", "", "", "" if s is None else f"{s:.4f}", ""])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {"source": None if self.source is None else self.source.to_dict(),
                "cold": self.cold.to_dict(), "warm": self.warm.to_dict(), "speedup": self.speedup}


def transfer_experiment(config: RunConfig, *, source=None, source_threshold: str = "Min") -> TransferReport:
    """Train cold and warm at `config.threshold`.

    Without `source` (an agent, table, network or file), a source agent is
    first trained at `source_threshold` with the same seed and budget.
    """
    source_report = None
    if source is None:
        source_report = run_training(replace(config, threshold=source_threshold))
        source = source_report.agent
    cold = run_training(config)
    warm = run_training(config, warm_from=source)
    return TransferReport(source_report, cold, warm)


__all__ = ["TransferReport", "transfer_experiment"]
