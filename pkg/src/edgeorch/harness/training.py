"""Training and evaluation runs with oracle-based convergence detection."""

from __future__ import annotations

import csv
import io
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from ..agents import (
    Agent,
    agent_step,
    dqn_params,
    make_agent,
    ql_params,
    warm_start,
)
from ..domain import ScenarioConfig, load_scenario
from ..oracle import evaluation_states, prediction_accuracy
from ..simenv import Environment


@dataclass(frozen=True)
class RunConfig:
    scenario: str = "exp_a"
    users: int = 3
    threshold: str = "Max"
    agent: str = "ql"
    seed: int = 0
    budget: int = 20_000
    check_every: int = 100
    window: int = 10
    load_carryover: float = 0.0
    link_flip_prob: float = 0.0
    params: dict = field(default_factory=dict)

    def scenario_config(self) -> ScenarioConfig:
        return load_scenario(self.scenario, num_end_devices=self.users, threshold=self.threshold)

    def make_env(self) -> Environment:
        return Environment(self.scenario_config(), seed=self.seed,
                           load_carryover=self.load_carryover, link_flip_prob=self.link_flip_prob)

    def make_agent(self) -> Agent:
        sc = self.scenario_config()
        preset = dqn_params if self.agent == "dqn" else ql_params
        return make_agent(self.agent, sc, preset(self.users, **self.params), seed=self.seed)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        return cls(**d)


@dataclass
class Check:
    step: int
    epsilon: float
    mean_reward: float
    agreement: float


@dataclass
class TrainingReport:
    config: RunConfig
    converged: bool
    steps_to_convergence: int | None
    steps_run: int
    final_prediction_accuracy: float
    wall_clock_s: float
    hyper_params: dict
    checks: list[Check]
    agent: Agent | None = field(default=None, repr=False, compare=False)

    @property
    def reward_curve(self) -> list[tuple[int, float]]:
        return [(c.step, c.mean_reward) for c in self.checks]

    def to_dict(self, include_timing: bool = False) -> dict:
        d = {
            "config": self.config.to_dict(),
            "converged": self.converged,
            "steps_to_convergence": self.steps_to_convergence,
            "steps_run": self.steps_run,
            "final_prediction_accuracy": self.final_prediction_accuracy,
            "hyper_params": self.hyper_params,
        }
        if include_timing:
            d["wall_clock_s"] = self.wall_clock_s
        return d

    def curve_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["step", "epsilon", "mean_reward", "oracle_agreement"])
        for c in self.checks:
            w.writerow([c.step, f"{c.epsilon:.6f}", f"{c.mean_reward:.4f}", f"{c.agreement:.4f}"])
        return buf.getvalue()


def run_training(config: RunConfig, *, agent: Agent | None = None, warm_from=None,
                 env: Environment | None = None) -> TrainingReport:
    """Train until the greedy policy matches the oracle for `window` checks in a row.

    Checks happen at step 0 and every `check_every` steps. The reported
    convergence step is the first check of the successful streak. Running
    out of budget is reported through `converged=False`.
    """
    env = env or config.make_env()
    agent = agent or config.make_agent()
    if warm_from is not None:
        warm_start(agent, warm_from)
    space = agent.space if agent.space != env.action_space else None
    rng = np.random.default_rng(config.seed)
    start = time.perf_counter()

    dynamic = env.load_carryover > 0 or env.link_flip_prob > 0
    visited: dict = {}
    eval_states = evaluation_states(env)
    checks: list[Check] = []
    streak_start = None
    streak = 0
    rewards_since = []
    steps = 0
    while True:
        if steps % config.check_every == 0:
            states = evaluation_states(env, visited) if dynamic else eval_states
            acc = prediction_accuracy(agent, env, states=states, space=space)
            mean_r = float(np.mean(rewards_since)) if rewards_since else 0.0
            checks.append(Check(steps, agent.epsilon, mean_r, acc))
            rewards_since = []
            if acc >= 1.0:
                if streak == 0:
                    streak_start = steps
                streak += 1
                if streak >= config.window:
                    break
            else:
                streak = 0
        if steps >= config.budget:
            break
        if dynamic:
            visited.setdefault(env.state, None)
        rewards_since.append(agent_step(agent, env, rng))
        steps += 1

    converged = streak >= config.window
    return TrainingReport(
        config=config,
        converged=converged,
        steps_to_convergence=streak_start if converged else None,
        steps_run=steps,
        final_prediction_accuracy=checks[-1].agreement,
        wall_clock_s=time.perf_counter() - start,
        hyper_params=agent.params.to_dict(),
        checks=checks,
        agent=agent,
    )
