import io

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from edgeorch.agents import FixedPolicy, fixed_policy
from edgeorch.domain import (
    DEFAULT_DEVICES,
    DEFAULT_POOL,
    ActionSpace,
    ConfigurationError,
    DeviceAction,
    JointAction,
    Link,
    Placement,
    Tier,
    make_scenario,
)
from edgeorch.simenv import (
    CalibrationTable,
    Concurrency,
    Environment,
    average_accuracy,
    contention_factor,
    default_calibration,
    evaluate_joint,
    outcome_table,
    response_time,
    reward,
    trace_rows,
    worst_case_response_ms,
)

CAL = default_calibration()


def within(value, target, rel):
    return abs(value - target) <= rel * target


def zero_overhead(cal=CAL):
    return CalibrationTable(
        compute_ms=cal.compute_ms,
        transmit_request_ms={"Regular": 0.0, "Weak": 1.0},
        decision_ms={"Regular": 0.0, "Weak": 0.0},
        broadcast_update_ms={"Regular": 0.0, "Weak": 0.0},
        offload_hop_ms=0.0,
    )


# -- calibration table -------------------------------------------------------------


def test_shipped_calibration_invariants():
    for m in DEFAULT_POOL:
        row = CAL.compute_ms[m.id]
        assert row["End"] > row["Edge"] > row["Cloud"] > 0
    CAL.check_pool(DEFAULT_POOL)
    assert CAL.transmit_request_ms["Weak"] > CAL.transmit_request_ms["Regular"]
    assert CAL.weak_extra_delay_ms == 20.0


def test_calibration_rejects_broken_tables():
    rows = {"d0": {"End": 1.0, "Edge": 2.0, "Cloud": 0.5}}
    with pytest.raises(ConfigurationError):
        CalibrationTable(compute_ms=rows)
    with pytest.raises(ConfigurationError):
        CalibrationTable(compute_ms={}, transmit_request_ms={"Regular": 5.0, "Weak": 5.0})


def test_non_monotone_pool_costs_are_rejected():
    rows = {m.id: dict(CAL.compute_ms[m.id]) for m in DEFAULT_POOL}
    rows["d7"] = {k: v * 100 for k, v in rows["d7"].items()}
    with pytest.raises(ConfigurationError):
        CalibrationTable(compute_ms=rows).check_pool(DEFAULT_POOL)


def test_calibration_round_trips(tmp_path):
    CAL.save(tmp_path / "c.json")
    assert CalibrationTable.load(tmp_path / "c.json") == CAL


def test_unknown_model_or_tier_is_configuration_error():
    with pytest.raises(ConfigurationError):
        CAL.compute("d9", Tier.END)
    sc = make_scenario("exp_a", 1)
    with pytest.raises(ConfigurationError):
        response_time(0, DeviceAction(Placement.LOCAL, "d9"), Concurrency((1,), 0, 0), sc)


# -- contention ----------------------------------------------------------------


def test_contention_within_capacity():
    assert contention_factor(DEFAULT_DEVICES[Tier.CLOUD], 4) == 1
    assert contention_factor(DEFAULT_DEVICES[Tier.END], 1) == 1


def test_contention_edge_five_requests():
    assert contention_factor(DEFAULT_DEVICES[Tier.EDGE], 5) == 3


def test_contention_slot_override():
    assert contention_factor(DEFAULT_DEVICES[Tier.CLOUD], 3, slots=1) == 3


def test_contention_needs_a_request():
    with pytest.raises(ValueError):
        contention_factor(DEFAULT_DEVICES[Tier.EDGE], 0)


@given(k=st.integers(1, 50), vcpus=st.integers(1, 8))
def test_contention_is_monotone(k, vcpus):
    node = DEFAULT_DEVICES[Tier.EDGE].__class__(Tier.EDGE, vcpus, 1.0, 1.0)
    assert contention_factor(node, k + 1) >= contention_factor(node, k) >= 1


# -- accuracy and reward -------------------------------------------------------


def test_average_accuracy_examples():
    j = lambda *ms: JointAction(tuple(DeviceAction(Placement.LOCAL, m) for m in ms))
    assert average_accuracy(j("d0", "d0", "d0"), DEFAULT_POOL) == pytest.approx(89.9)
    assert average_accuracy(j("d7", "d7"), DEFAULT_POOL) == pytest.approx(72.8)
    assert average_accuracy(j("d4", "d4", "d4", "d0", "d4"), DEFAULT_POOL) == pytest.approx(89.10)


def test_reward_satisfied_branch():
    assert reward(418.91, 89.9, "P89", CAL) == -418.91


def test_reward_penalty_branch():
    assert reward(100.0, 72.8, "P89", CAL) == -CAL.max_response_penalty_ms


def test_reward_min_threshold_never_penalizes():
    assert reward(70.0, 72.8, "Min", CAL) == -70.0


def test_reward_max_threshold_met_by_top_model_only():
    assert reward(400.0, 89.9, "Max", CAL) == -400.0
    assert reward(400.0, 89.6, "Max", CAL) == -CAL.max_response_penalty_ms


def test_reward_is_strict_below_max():
    assert reward(100.0, 85.0, "P85", CAL) == -CAL.max_response_penalty_ms


# -- response time ---------------------------------------------------------------


def test_single_cloud_request_close_to_measured():
    sc = make_scenario("exp_a", 1)
    _, avg, _ = evaluate_joint(JointAction.parse("{d0,C}"), sc)
    assert within(avg, 363.47, 0.15)


def test_local_without_overhead_is_pure_compute():
    sc = make_scenario("exp_a", 1)
    t = response_time(0, DeviceAction(Placement.LOCAL, "d7"), Concurrency((1,), 0, 0), sc,
                      zero_overhead())
    assert t == CAL.compute_ms["d7"]["End"]


def test_five_local_d7_matches_min_row():
    sc = make_scenario("exp_a", 5, "Min")
    _, avg, acc = evaluate_joint(JointAction.parse(["d7,L"] * 5), sc)
    assert within(avg, 72.08, 0.10)
    assert acc == pytest.approx(72.8)


@pytest.mark.parametrize("scenario, actions, target", [
    ("exp_a", "{d0,E} {d0,L} {d0,L} {d0,C} {d0,L}", 418.91),
    ("exp_d", "{d0,L} {d0,C} {d0,E} {d0,L} {d0,L}", 506.62),
])
def test_step_reproduces_max_rows(scenario, actions, target):
    env = Environment(make_scenario(scenario, 5))
    out = env.step(JointAction.parse(actions))
    assert within(out.avg_response_ms, target, 0.15)
    assert out.avg_accuracy_pct == pytest.approx(89.9)
    assert out.reward == -out.avg_response_ms
    assert out.avg_response_ms == pytest.approx(np.mean(out.per_device_response_ms))


def test_step_single_local_reward_is_its_response():
    env = Environment(make_scenario("exp_a", 1, "Min"))
    out = env.step(JointAction.parse("{d7,L}"))
    assert out.reward == -out.per_device_response_ms[0]


# -- scenario switching ----------------------------------------------------------


def test_apply_scenario_sets_links():
    env = Environment(make_scenario("exp_a", 5))
    env.apply_scenario("exp_b")
    assert [l.value[0] for l in env.links[0]] == list("RWRWR") and env.links[1] is Link.WEAK
    env.apply_scenario("exp_c")
    assert [l.value[0] for l in env.links[0]] == list("WWWRR") and env.links[1] is Link.REGULAR
    env.apply_scenario("exp_a")
    assert set(env.links[0]) == {Link.REGULAR} and env.links[1] is Link.REGULAR
    with pytest.raises(ConfigurationError):
        env.apply_scenario("exp_q")


def test_penalty_below_worst_response_is_rejected():
    cal = CalibrationTable(compute_ms=CAL.compute_ms, offload_hop_ms=CAL.offload_hop_ms,
                           max_response_penalty_ms=100.0)
    with pytest.raises(ConfigurationError):
        Environment(make_scenario("exp_a", 3), cal)


# -- invariants --------------------------------------------------------------------


def fixed_avg(kind, scenario, n):
    sc = make_scenario(scenario, n)
    return evaluate_joint(fixed_policy(kind, sc), sc)[1]


def test_device_only_is_flat_in_users():
    local = [fixed_avg(FixedPolicy.DEVICE_ONLY, "exp_a", n) for n in range(1, 6)]
    assert len(set(local)) == 1


@pytest.mark.parametrize("scenario", ["exp_a", "exp_b", "exp_c", "exp_d"])
def test_offload_only_grows_with_users(scenario):
    for kind in (FixedPolicy.EDGE_ONLY, FixedPolicy.CLOUD_ONLY):
        curve = [fixed_avg(kind, scenario, n) for n in range(1, 6)]
        assert all(b >= a for a, b in zip(curve, curve[1:]))
    assert fixed_avg(FixedPolicy.EDGE_ONLY, scenario, 5) > fixed_avg(FixedPolicy.CLOUD_ONLY, scenario, 5)


def test_fixed_policies_near_measured_values():
    assert within(fixed_avg(FixedPolicy.EDGE_ONLY, "exp_a", 5), 1140, 0.15)
    assert within(fixed_avg(FixedPolicy.CLOUD_ONLY, "exp_a", 5), 665, 0.15)


@settings(max_examples=60, deadline=None)
@given(n=st.integers(1, 4), seed=st.integers(0, 10 ** 6), scenario=st.sampled_from(["exp_a", "exp_b", "exp_c", "exp_d"]))
def test_vectorized_outcomes_match_scalar(n, seed, scenario):
    sc = make_scenario(scenario, n, "P85")
    space = ActionSpace.full(sc)
    table = outcome_table(space, sc)
    i = int(np.random.default_rng(seed).integers(space.size))
    per, avg, acc = evaluate_joint(space.decode(i), sc)
    assert np.allclose(table.per_device_ms[i], per)
    assert table.avg_response_ms[i] == pytest.approx(avg)
    assert table.avg_accuracy_pct[i] == pytest.approx(acc)
    assert table.rewards[i] == reward(avg, acc, "P85", CAL)


@settings(max_examples=40, deadline=None)
@given(n=st.integers(1, 4), seed=st.integers(0, 10 ** 6))
def test_weak_links_never_help(n, seed):
    rng = np.random.default_rng(seed)
    sc = make_scenario("exp_a", n)
    space = ActionSpace.full(sc)
    action = space.decode(int(rng.integers(space.size)))
    regular = evaluate_joint(action, sc)[0]
    weak_dev = tuple(Link.WEAK if f else Link.REGULAR for f in rng.random(n) < 0.5)
    weak = evaluate_joint(action, sc, links=(weak_dev, Link.WEAK if rng.random() < 0.5 else Link.REGULAR))[0]
    assert all(w >= r for w, r in zip(weak, regular))


@settings(max_examples=40, deadline=None)
@given(n=st.integers(1, 5), seed=st.integers(0, 10 ** 6))
def test_response_non_decreasing_in_macs_for_fixed_placements(n, seed):
    rng = np.random.default_rng(seed)
    sc = make_scenario("exp_c", n)
    by_macs = sorted(DEFAULT_POOL, key=lambda m: m.macs)
    models = list(rng.choice(len(by_macs), size=n))
    base = JointAction(tuple(DeviceAction(Placement.LOCAL, by_macs[i].id) for i in models))
    j = int(rng.integers(n))
    bigger = list(models)
    bigger[j] = min(len(by_macs) - 1, bigger[j] + 1)
    if by_macs[bigger[j]].macs == by_macs[models[j]].macs:
        return
    up = JointAction(tuple(DeviceAction(Placement.LOCAL, by_macs[i].id) for i in bigger))
    assert evaluate_joint(up, sc)[1] >= evaluate_joint(base, sc)[1]


@pytest.mark.parametrize("n", [1, 3, 5])
def test_rewards_non_positive_and_penalty_is_worst(n):
    for scenario in ("exp_a", "exp_d"):
        sc = make_scenario(scenario, n, "P89")
        table = outcome_table(ActionSpace.full(sc), sc)
        assert (table.rewards <= 0).all()
        assert table.avg_response_ms.max() <= worst_case_response_ms(sc, CAL) <= CAL.max_response_penalty_ms
        if table.feasible.any() and (~table.feasible).any():
            assert table.rewards[~table.feasible].max() <= table.rewards[table.feasible].min()


def test_determinism_with_trace():
    def run(seed):
        buf = io.StringIO()
        env = Environment(make_scenario("exp_b", 3, "P85"), seed=seed, load_carryover=0.5,
                          link_flip_prob=0.2, trace=buf)
        rng = np.random.default_rng(3)
        outs = [env.step(int(rng.integers(env.action_space.size))) for _ in range(50)]
        return buf.getvalue(), outs

    a, oa = run(7)
    b, ob = run(7)
    assert a == b and oa == ob
    rows = trace_rows(a)
    assert len(rows) == 50 and set(rows[0]) >= {"step", "state", "action", "avg_response_ms", "reward"}


def test_idle_environment_state_is_constant_without_carryover():
    env = Environment(make_scenario("exp_a", 3))
    s0 = env.state
    for i in (0, 999, 555):
        assert env.step(i).next_state == s0


def test_carryover_reflects_placements():
    env = Environment(make_scenario("exp_a", 3), load_carryover=1.0)
    out = env.step(JointAction.parse("{d0,E} {d0,E} {d0,C}"))
    assert out.next_state.levels[0] == 8  # edge saturated
    assert out.next_state.levels[3] == 2  # cloud at 1/4 utilization


def test_step_index_matches_step():
    a = Environment(make_scenario("exp_c", 3, "P80"))
    b = Environment(make_scenario("exp_c", 3, "P80"))
    for i in (0, 17, 998):
        r, s = a.step_index(i)
        out = b.step(i)
        assert r == out.reward and s == out.next_state
