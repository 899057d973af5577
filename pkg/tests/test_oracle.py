import time

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from edgeorch.agents import QLearningAgent, ql_params
from edgeorch.domain import THRESHOLD_ORDER, ActionSpace, JointAction, make_scenario
from edgeorch.oracle import (
    OracleAgent,
    OracleBudgetError,
    RandomAgent,
    evaluation_states,
    optimal_action,
    oracle_rows,
    prediction_accuracy,
    same_outcome,
    write_oracle_csv,
)
from edgeorch.simenv import Environment, meets_accuracy

SCENARIOS = ("exp_a", "exp_b", "exp_c", "exp_d")


def env_for(name="exp_a", n=3, threshold="Max"):
    return Environment(make_scenario(name, n, threshold))


def test_exhaustive_optimality_small_space():
    env = env_for()
    t0 = time.perf_counter()
    best = optimal_action(env)
    top = env.scenario.top_model.top5_accuracy
    for action in env.action_space:
        _, avg, acc = env.evaluate(action)
        if meets_accuracy(acc, env.threshold, top):
            assert avg >= best.avg_response_ms - 1e-9
    assert time.perf_counter() - t0 < 10


def test_max_threshold_at_five_users_matches_measured_average():
    best = optimal_action(env_for(n=5))
    assert best.feasible
    assert abs(best.avg_response_ms - 418.91) <= 0.15 * 418.91
    assert {a.model for a in best.action} == {"d0"}


def test_min_threshold_picks_smallest_local_model():
    best = optimal_action(env_for(n=5, threshold="Min"))
    assert best.action == JointAction.parse(["d7,L"] * 5)
    assert abs(best.avg_response_ms - 72.08) <= 0.15 * 72.08


def test_single_user_is_enumerable():
    best = optimal_action(env_for(n=1))
    assert best.feasible and len(best.action) == 1
    assert best.action[0].model == "d0"


def test_ties_go_to_lowest_index():
    env = env_for(n=2, threshold="Min")
    best = optimal_action(env)
    table = env.outcomes()
    ties = np.flatnonzero(np.abs(table.avg_response_ms - best.avg_response_ms) < 1e-12)
    assert best.index == ties.min()


def test_budget_guard():
    with pytest.raises(OracleBudgetError, match="budget"):
        optimal_action(env_for(), budget=999)
    assert optimal_action(env_for(), budget=1000).feasible


@pytest.mark.parametrize("name", SCENARIOS)
def test_optimum_non_increasing_as_threshold_relaxes(name):
    env = env_for(name)
    values = [optimal_action(env, threshold=t).avg_response_ms for t in THRESHOLD_ORDER]
    assert all(b <= a + 1e-9 for a, b in zip(values, values[1:]))


@pytest.mark.parametrize("name", SCENARIOS)
def test_oracle_verify_against_scalar_sweep(name):
    env = env_for(name, n=2, threshold="P85")
    optimal_action(env, verify=True)


@settings(max_examples=15, deadline=None)
@given(name=st.sampled_from(SCENARIOS), n=st.integers(1, 3), thr=st.sampled_from(THRESHOLD_ORDER))
def test_oracle_result_is_feasible_and_consistent(name, n, thr):
    env = env_for(name, n, thr)
    best = optimal_action(env)
    _, avg, acc = env.evaluate(best.action)
    assert same_outcome((avg, acc), (best.avg_response_ms, best.avg_accuracy_pct))
    assert meets_accuracy(acc, env.threshold, env.scenario.top_model.top5_accuracy)


def test_offload_only_space_optimum_uses_top_model():
    env = env_for(n=3, threshold="P85")
    sp = ActionSpace.offload_only(env.scenario)
    best = optimal_action(env, space=sp)
    assert {a.model for a in best.action} == {"d0"}
    assert best.avg_response_ms >= optimal_action(env).avg_response_ms - 1e-9


def test_oracle_agent_scores_perfectly():
    env = env_for()
    assert prediction_accuracy(OracleAgent(env), env) == 1.0


def test_random_agent_scores_poorly():
    env = env_for(n=3)
    scores = [prediction_accuracy(RandomAgent(env.action_space, seed=s), env) for s in range(20)]
    assert np.mean(scores) < 0.5


def test_untrained_agent_is_scored_by_outcome():
    env = env_for(threshold="Min")
    agent = QLearningAgent(env.action_space, ql_params(3, epsilon=0.0))
    assert prediction_accuracy(agent, env) == 0.0
    agent.table.set(env.state, optimal_action(env).index, 1.0)
    assert prediction_accuracy(agent, env) == 1.0


def test_evaluation_states_deduplicate():
    env = env_for()
    s = env.state
    assert evaluation_states(env, [s, s]) == [s]


def test_oracle_csv_is_stable():
    env = env_for()
    a = write_oracle_csv(oracle_rows(env, THRESHOLD_ORDER))
    b = write_oracle_csv(oracle_rows(env_for(), THRESHOLD_ORDER))
    assert a == b
    lines = a.splitlines()
    assert lines[0].startswith("scenario,users,threshold") and len(lines) == 6
