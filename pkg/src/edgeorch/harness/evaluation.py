"""Greedy evaluation of trained agents against baselines and the offload-only agent."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ..agents import Agent, FixedPolicy, fixed_policy
from ..domain import JointAction
from ..simenv import Environment, meets_accuracy
from .training import RunConfig, TrainingReport, run_training


@dataclass
class EvalReport:
    config: RunConfig
    decisions: JointAction
    avg_response_ms: float
    avg_accuracy_pct: float
    meets_threshold: bool
    baselines: dict[str, float]
    sota_decisions: JointAction | None = None
    sota_avg_response_ms: float | None = None
    sota_avg_accuracy_pct: float | None = None

    @property
    def speedup_vs_sota(self) -> float | None:
        if self.sota_avg_response_ms is None:
            return None
        return self.sota_avg_response_ms / self.avg_response_ms

    @property
    def accuracy_loss_vs_sota(self) -> float | None:
        if self.sota_avg_accuracy_pct is None:
            return None
        return self.sota_avg_accuracy_pct - self.avg_accuracy_pct

    def to_dict(self) -> dict:
        return {
            "decisions": [str(a) for a in self.decisions],
            "avg_response_ms": self.avg_response_ms,
            "avg_accuracy_pct": self.avg_accuracy_pct,
            "meets_threshold": self.meets_threshold,
            "baselines": dict(self.baselines),
            "sota_decisions": None if self.sota_decisions is None else [str(a) for a in self.sota_decisions],
            "sota_avg_response_ms": self.sota_avg_response_ms,
            "sota_avg_accuracy_pct": self.sota_avg_accuracy_pct,
            "speedup_vs_sota": self.speedup_vs_sota,
        }


def greedy_rollout(agent: Agent, env: Environment, steps: int = 10) -> tuple[JointAction, float, float]:
    """Run the greedy policy from a fresh reset; return the first decision and mean outcomes."""
    env = env.clone()
    state = env.reset()
    first = agent.greedy_action(state)
    responses, accuracies = [], []
    for _ in range(steps):
        out = env.step(agent.greedy_action(state))
        responses.append(out.avg_response_ms)
        accuracies.append(out.avg_accuracy_pct)
        state = out.next_state
    return first, float(np.mean(responses)), float(np.mean(accuracies))


def baseline_responses(env: Environment) -> dict[str, float]:
    return {p.value: env.evaluate(fixed_policy(p, env.scenario))[1] for p in FixedPolicy}


def train_sota(config: RunConfig) -> TrainingReport:
    return run_training(replace(config, agent="sota", params={}))


def run_evaluation(config: RunConfig, agent: Agent, *, sota: Agent | None = None,
                   rollout_steps: int = 10) -> EvalReport:
    """Evaluate `agent` with exploration off; compare with fixed policies and, if given, SOTA."""
    env = config.make_env()
    decisions, avg, acc = greedy_rollout(agent, env, rollout_steps)
    top = env.scenario.top_model.top5_accuracy
    report = EvalReport(config, decisions, avg, acc, meets_accuracy(acc, env.threshold, top),
                        baseline_responses(env))
    if sota is not None:
        report.sota_decisions, report.sota_avg_response_ms, report.sota_avg_accuracy_pct = \
            greedy_rollout(sota, env, rollout_steps)
    return report


__all__ = ["EvalReport", "baseline_responses", "greedy_rollout", "run_evaluation", "train_sota"]
