"""Brute-force ground truth over the joint action space."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .agents import Agent, HyperParams
from .domain import ActionSpace, ConfigurationError, DiscreteState, JointAction, threshold_name
from .simenv import Environment, meets_accuracy

DEFAULT_BUDGET = 2_000_000
OUTCOME_TOL = 1e-6


class OracleBudgetError(ConfigurationError):
    pass


@dataclass(frozen=True)
class OracleResult:
    action: JointAction
    index: int
    avg_response_ms: float
    avg_accuracy_pct: float
    feasible: bool


def optimal_action(env: Environment, state: DiscreteState | None = None, threshold=None, *,
                   space: ActionSpace | None = None, budget: int = DEFAULT_BUDGET,
                   verify: bool = False) -> OracleResult:
    """Fastest joint action meeting the accuracy threshold; ties go to the lowest index.

    If nothing meets the threshold, the unconstrained fastest action is
    returned with `feasible=False`. `verify` re-checks the result against a
    scalar evaluation of every action (slow; for tests).
    """
    space = space or env.action_space
    if space.size > budget:
        raise OracleBudgetError(
            f"joint space of {space.size} actions exceeds the brute-force budget of {budget}; "
            f"it grows as {space.radix}^N")
    table = env.outcomes(state, space, threshold)
    feasible = bool(table.feasible.any())
    masked = np.where(table.feasible, table.avg_response_ms, np.inf) if feasible else table.avg_response_ms
    i = int(np.argmin(masked))
    result = OracleResult(space.decode(i), i, float(table.avg_response_ms[i]),
                          float(table.avg_accuracy_pct[i]), feasible)
    if verify:
        _verify(env, state, threshold, space, result)
    return result


def _verify(env, state, threshold, space, result) -> None:
    links = (state.device_links, state.edge_link) if state is not None else env.links
    thr = env.outcomes(state, space, threshold)
    top = env.scenario.top_model.top5_accuracy
    thr_value = env.scenario.with_threshold(threshold).threshold if threshold is not None else env.threshold
    for i, action in enumerate(space):
        _, avg, acc = env.evaluate(action, links)
        assert abs(avg - thr.avg_response_ms[i]) < 1e-6
        if result.feasible and meets_accuracy(acc, thr_value, top):
            assert avg >= result.avg_response_ms - 1e-9, (action, avg, result)


def evaluation_states(env: Environment, visited=()) -> list[DiscreteState]:
    """The state the environment starts in plus any states seen in a rollout, deduplicated."""
    out = [env.clone().reset()]
    for s in visited:
        if s not in out:
            out.append(s)
    return out


def same_outcome(a: tuple[float, float], b: tuple[float, float], tol: float = OUTCOME_TOL) -> bool:
    return abs(a[0] - b[0]) <= tol and abs(a[1] - b[1]) <= tol


def prediction_accuracy(agent: Agent, env: Environment, threshold=None,
                        states=None, *, space: ActionSpace | None = None) -> float:
    """Share of states where the agent's greedy action matches the oracle's outcome."""
    states = list(states) if states is not None else evaluation_states(env)
    if not states:
        return 0.0
    hits = 0
    for s in states:
        best = optimal_action(env, s, threshold, space=space)
        links = (s.device_links, s.edge_link)
        _, avg, acc = env.evaluate(agent.greedy_action(s), links)
        hits += same_outcome((avg, acc), (best.avg_response_ms, best.avg_accuracy_pct))
    return hits / len(states)


class OracleAgent(Agent):
    """Greedy policy that looks up the brute-force optimum."""

    kind = "oracle"

    def __init__(self, env: Environment, threshold=None, space: ActionSpace | None = None):
        super().__init__(space or env.action_space, HyperParams(alpha=1.0, epsilon=0.0))
        self._env, self._threshold = env, threshold

    def greedy(self, state):
        return optimal_action(self._env, state, self._threshold, space=self.space).index


class RandomAgent(Agent):
    """Ignores the state and picks a uniformly random joint action."""

    kind = "random"

    def __init__(self, space: ActionSpace, seed: int = 0):
        super().__init__(space, HyperParams(alpha=1.0, epsilon=1.0))
        self._rng = np.random.default_rng(seed)

    def greedy(self, state):
        return int(self._rng.integers(self.space.size))


ORACLE_COLUMNS = ("scenario", "users", "threshold", "state", "action", "avg_response_ms",
                  "avg_accuracy_pct", "feasible")


def oracle_rows(env: Environment, thresholds, states=None) -> list[dict]:
    rows = []
    for thr in thresholds:
        for s in states or evaluation_states(env):
            r = optimal_action(env, s, thr)
            rows.append({"scenario": env.scenario.name, "users": env.scenario.num_end_devices,
                         "threshold": threshold_name(thr), "state": str(s), "action": str(r.action),
                         "avg_response_ms": f"{r.avg_response_ms:.4f}",
                         "avg_accuracy_pct": f"{r.avg_accuracy_pct:.4f}", "feasible": int(r.feasible)})
    return rows


def write_oracle_csv(rows: list[dict], stream=None) -> str:
    buf = stream or io.StringIO()
    w = csv.DictWriter(buf, fieldnames=ORACLE_COLUMNS, lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue() if stream is None else ""


__all__ = [
    "DEFAULT_BUDGET", "OracleAgent", "OracleBudgetError", "OracleResult", "RandomAgent",
    "evaluation_states", "optimal_action", "oracle_rows", "prediction_accuracy", "same_outcome",
    "write_oracle_csv",
]
