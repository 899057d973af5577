import math

import pytest
from hypothesis import given, strategies as st

from edgeorch.domain import (
    DEFAULT_POOL,
    ActionSpace,
    ConfigurationError,
    DeviceAction,
    DeviceSpec,
    DiscreteState,
    JointAction,
    Link,
    ModelSpec,
    NodeLoad,
    Placement,
    ResourceSnapshot,
    ScenarioConfig,
    Tier,
    discretize,
    enumerate_actions,
    load_scenario,
    make_scenario,
    state_action_space_size,
    threshold_value,
    validate_joint,
)


def snapshot(scenario, edge_u=0.0, cloud_u=0.0, end_u=None, end_mem=None):
    n = scenario.num_end_devices
    end_u = end_u or [0.0] * n
    end_mem = end_mem or [1.0] * n
    end = tuple(NodeLoad(u, m, l) for u, m, l in zip(end_u, end_mem, scenario.device_links))
    return ResourceSnapshot(end, NodeLoad(edge_u, 1.0, scenario.edge_link), NodeLoad(cloud_u, 1.0))


# -- model pool and thresholds ---------------------------------------------------


def test_default_pool_has_eight_models_with_d0_most_accurate():
    assert len(DEFAULT_POOL) == 8
    assert max(DEFAULT_POOL, key=lambda m: m.top5_accuracy).id == "d0"
    assert DEFAULT_POOL[0].top5_accuracy == 89.9
    assert DEFAULT_POOL[7].top5_accuracy == 72.8


def test_model_spec_rejects_inconsistent_accuracy():
    with pytest.raises(ConfigurationError):
        ModelSpec("x", 10, "FP32", 90.0, 80.0)
    with pytest.raises(ConfigurationError):
        ModelSpec("x", 10, "FP32", 0.0, 0.0)
    with pytest.raises(ConfigurationError):
        ModelSpec("x", 10, "FP16", 1.0, 2.0)


def test_device_spec_needs_a_vcpu():
    with pytest.raises(ConfigurationError):
        DeviceSpec(Tier.END, 0, 1.0, 1.0)


def test_threshold_values_and_aliases():
    assert [threshold_value(t) for t in ("Min", "80%", "85", "P89", "Max")] == [0, 80, 85, 89, 89.9]
    assert threshold_value(89.9) == 89.9
    with pytest.raises(ConfigurationError):
        threshold_value("70%")


def test_max_threshold_equals_top_model_accuracy():
    sc = make_scenario("exp_a", 5, "Max")
    assert sc.threshold == sc.top_model.top5_accuracy == 89.9


# -- scenarios -----------------------------------------------------------------


@pytest.mark.parametrize("name, links, edge", [
    ("exp_a", "RRRRR", "R"),
    ("exp_b", "RWRWR", "W"),
    ("exp_c", "WWWRR", "R"),
    ("exp_d", "WWWWW", "W"),
])
def test_shipped_scenarios_encode_link_patterns(name, links, edge):
    sc = load_scenario(name)
    assert "".join(l.value[0] for l in sc.device_links) == links
    assert sc.edge_link.value[0] == edge
    assert sc == make_scenario(name)


def test_unknown_scenario_is_rejected():
    with pytest.raises(ConfigurationError):
        load_scenario("exp_z")


def test_scenario_round_trips_through_file(tmp_path):
    sc = make_scenario("exp_b", 3, "85%")
    sc.save(tmp_path / "s.json")
    assert ScenarioConfig.load(tmp_path / "s.json") == sc
    assert load_scenario(str(tmp_path / "s.json")) == sc


def test_engine_accepts_more_than_five_users():
    sc = load_scenario("exp_a").with_users(7)
    assert sc.num_end_devices == 7 and len(sc.device_links) == 7


def test_link_count_must_match_users():
    with pytest.raises(ConfigurationError):
        ScenarioConfig("x", 2, ("R",))


# -- discretize --------------------------------------------------------------


def test_idle_snapshot_discretizes_to_all_available():
    sc = make_scenario("exp_a", 3)
    s = discretize(snapshot(sc), sc)
    assert s.levels == (0,) * 15


def test_edge_full_utilization_is_top_level():
    sc = make_scenario("exp_a", 2)
    assert discretize(snapshot(sc, edge_u=1.0), sc).levels[0] == 8


def test_edge_half_utilization_is_level_four():
    sc = make_scenario("exp_a", 2)
    assert discretize(snapshot(sc, edge_u=0.5), sc).levels[0] == 4


def test_end_device_busy_cutoffs():
    sc = make_scenario("exp_a", 3)
    s = discretize(snapshot(sc, end_u=[0.5, 0.51, 0.0], end_mem=[0.5, 1.0, 0.49]), sc)
    assert s.levels[6:] == (0, 0, 0, 1, 0, 0, 0, 1, 0)


def test_links_are_copied_through():
    sc = make_scenario("exp_b", 5)
    s = discretize(snapshot(sc), sc)
    assert s.edge_link is Link.WEAK
    assert s.device_links == sc.device_links


def test_snapshot_must_cover_all_devices():
    sc = make_scenario("exp_a", 3)
    with pytest.raises(ConfigurationError):
        discretize(snapshot(make_scenario("exp_a", 2)), sc)


unit = st.floats(0.0, 1.0)


@given(n=st.integers(1, 5), data=st.data())
def test_discretize_shape_and_ranges(n, data):
    sc = make_scenario("exp_c", n)
    snap = snapshot(sc, data.draw(unit), data.draw(unit),
                    data.draw(st.lists(unit, min_size=n, max_size=n)),
                    data.draw(st.lists(unit, min_size=n, max_size=n)))
    s = discretize(snap, sc)
    assert len(s.levels) == 3 * (n + 2)
    assert 0 <= s.levels[0] <= 8 and 0 <= s.levels[3] <= 8
    assert discretize(snap, sc) == s
    assert DiscreteState(s.levels) == s


# -- actions -----------------------------------------------------------------


def test_default_pool_gives_ten_actions_in_canonical_order():
    acts = enumerate_actions(make_scenario("exp_a", 3))
    assert len(acts) == 10
    assert [str(a) for a in acts] == [f"d{i},L" for i in range(8)] + ["d0,E", "d0,C"]


def test_single_model_pool_gives_three_actions():
    sc = make_scenario("exp_a", 1, model_pool=(DEFAULT_POOL[0],))
    assert len(enumerate_actions(sc)) == 3


def test_joint_space_size_for_three_users():
    assert ActionSpace.full(make_scenario("exp_a", 3)).size == 1000


@given(n=st.integers(1, 4), index=st.integers(0, 10 ** 4 - 1))
def test_action_space_decode_encode_round_trip(n, index):
    space = ActionSpace.full(make_scenario("exp_a", n))
    index %= space.size
    joint = space.decode(index)
    assert space.encode(joint) == index
    validate_joint(joint, make_scenario("exp_a", n))
    # one placement per device
    assert all(isinstance(a.placement, Placement) for a in joint)
    assert list(space.digit_matrix()[index]) == list(space.digits(index))


def test_offload_requires_top_model():
    sc = make_scenario("exp_a", 1)
    with pytest.raises(ConfigurationError):
        validate_joint(JointAction((DeviceAction(Placement.EDGE, "d3"),)), sc)


def test_joint_action_parse_and_format():
    j = JointAction.parse("{d0,E} {d4,L}")
    assert j == JointAction.parse(["d0,E", "d4,L"])
    assert str(j) == "{d0,E} {d4,L}"


# -- state-action space size ------------------------------------------------------


def test_space_size_three_users():
    size = state_action_space_size(make_scenario("exp_a", 3))
    assert size == 8 ** 3 * 36 ** 2 * 10 ** 3
    assert f"{size:.1e}" == "6.6e+08"


def test_space_size_five_users():
    assert f"{state_action_space_size(make_scenario('exp_a', 5)):.1e}" == "4.2e+12"


def test_space_size_one_user_one_action():
    assert state_action_space_size(num_end_devices=1, num_actions=1) == 10368


def test_space_size_overflow_is_explicit():
    with pytest.raises(OverflowError):
        state_action_space_size(num_end_devices=30, num_actions=10)
    assert math.log10(state_action_space_size(num_end_devices=8, num_actions=10)) > 15
