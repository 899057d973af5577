"""Deterministic end-edge-cloud inference-serving simulator.

Latency of one request from end device i (all N requests of a round are
submitted together):

    Local:  orch(link_i) + compute[m][End]   * contention(End,   1)
    Edge:   orch(link_i) + hop(link_i) + compute[top][Edge]  * contention(Edge,  k_edge)
    Cloud:  orch(link_i) + hop(link_i) + hop(link_edge) + compute[top][Cloud] * contention(Cloud, k_cloud)

orch() is the request/decision round trip to the orchestrator, charged to
every request, and hop() moves the input image one tier up. A weak hop pays
`weak_extra_delay_ms` on top of the regular transfer.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import IO, Mapping, Sequence

import numpy as np

from .domain import (
    ActionSpace,
    ConfigurationError,
    DeviceAction,
    DeviceSpec,
    DiscreteState,
    JointAction,
    Link,
    NodeLoad,
    Placement,
    ResourceSnapshot,
    ScenarioConfig,
    Tier,
    discretize,
    load_scenario,
    threshold_value,
    validate_joint,
)

_DATA = Path(__file__).parent / "data"
ACCURACY_EPS = 1e-9


@dataclass(frozen=True)
class CalibrationTable:
    """Numeric latency parameters of the simulator (all values in ms).

    `inference_slots` gives the number of requests a node serves without
    slowdown; None falls back to the node's vCPU count.
    """

    compute_ms: Mapping[str, Mapping[str, float]]
    transmit_request_ms: Mapping[str, float] = field(
        default_factory=lambda: {"Regular": 20.0, "Weak": 137.0})
    decision_ms: Mapping[str, float] = field(default_factory=lambda: {"Regular": 1.0, "Weak": 2.0})
    broadcast_update_ms: Mapping[str, float] = field(
        default_factory=lambda: {"Regular": 0.4, "Weak": 2.0})
    offload_hop_ms: float = 0.0
    weak_extra_delay_ms: float = 20.0
    max_response_penalty_ms: float = 2000.0
    inference_slots: Mapping[str, int | None] = field(
        default_factory=lambda: {"End": None, "Edge": None, "Cloud": None})

    def __post_init__(self):
        for name in ("transmit_request_ms", "decision_ms", "broadcast_update_ms"):
            table = getattr(self, name)
            if set(table) != {"Regular", "Weak"}:
                raise ConfigurationError(f"{name} needs Regular and Weak entries")
        if self.transmit_request_ms["Weak"] <= self.transmit_request_ms["Regular"]:
            raise ConfigurationError("weak request transmission must be slower than regular")
        for m, row in self.compute_ms.items():
            if set(row) != {"End", "Edge", "Cloud"}:
                raise ConfigurationError(f"compute_ms[{m}] needs End, Edge and Cloud entries")
            if not row["End"] > row["Edge"] > row["Cloud"] > 0:
                raise ConfigurationError(f"compute_ms[{m}] must decrease strictly End > Edge > Cloud")
        for tier, slots in self.inference_slots.items():
            if slots is not None and slots < 1:
                raise ConfigurationError(f"inference_slots[{tier}] must be >= 1")

    def compute(self, model: str, tier: Tier) -> float:
        try:
            return self.compute_ms[model][Tier(tier).value]
        except (KeyError, ValueError):
            raise ConfigurationError(f"no compute time for model {model!r} on tier {tier!r}") from None

    def orchestration_ms(self, link: Link) -> float:
        link = Link.parse(link).value
        return self.transmit_request_ms[link] + self.decision_ms[link]

    def hop_ms(self, link: Link) -> float:
        extra = self.weak_extra_delay_ms if Link.parse(link) is Link.WEAK else 0.0
        return self.offload_hop_ms + extra

    def slots(self, device: DeviceSpec) -> int:
        s = self.inference_slots.get(device.tier.value)
        return device.vcpus if s is None else int(s)

    def check_pool(self, pool) -> None:
        """Every pool model has a row, and cost never drops as MACs grow."""
        for m in pool:
            if m.id not in self.compute_ms:
                raise ConfigurationError(f"calibration lacks compute times for {m.id}")
        for tier in ("End", "Edge", "Cloud"):
            for a in pool:
                for b in pool:
                    if a.macs < b.macs and self.compute_ms[a.id][tier] > self.compute_ms[b.id][tier]:
                        raise ConfigurationError(
                            f"compute_ms not monotone in MACs on {tier}: {a.id} > {b.id}")

    def to_dict(self) -> dict:
        return {
            "compute_ms": {m: dict(row) for m, row in self.compute_ms.items()},
            "transmit_request_ms": dict(self.transmit_request_ms),
            "decision_ms": dict(self.decision_ms),
            "broadcast_update_ms": dict(self.broadcast_update_ms),
            "offload_hop_ms": self.offload_hop_ms,
            "weak_extra_delay_ms": self.weak_extra_delay_ms,
            "max_response_penalty_ms": self.max_response_penalty_ms,
            "inference_slots": dict(self.inference_slots),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CalibrationTable":
        known = {k: d[k] for k in cls.__dataclass_fields__ if k in d}
        return cls(**known)

    def save(self, path: "str | Path") -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path: "str | Path") -> "CalibrationTable":
        return cls.from_dict(json.loads(Path(path).read_text()))


_DEFAULT_CALIBRATION: CalibrationTable | None = None


def default_calibration() -> CalibrationTable:
    """The shipped, fitted calibration table."""
    global _DEFAULT_CALIBRATION
    if _DEFAULT_CALIBRATION is None:
        _DEFAULT_CALIBRATION = CalibrationTable.load(_DATA / "calibration.json")
    return _DEFAULT_CALIBRATION


def resolve_calibration(scenario: ScenarioConfig, calibration: CalibrationTable | None = None):
    return calibration or scenario.calibration or default_calibration()


@dataclass(frozen=True)
class Concurrency:
    """Active request counts per node during one synchronous round."""

    end: tuple[int, ...]
    edge: int
    cloud: int

    @classmethod
    def of(cls, action: JointAction) -> "Concurrency":
        return cls(
            end=tuple(int(a.placement is Placement.LOCAL) for a in action),
            edge=sum(a.placement is Placement.EDGE for a in action),
            cloud=sum(a.placement is Placement.CLOUD for a in action),
        )


@dataclass(frozen=True)
class StepOutcome:
    per_device_response_ms: tuple[float, ...]
    avg_response_ms: float
    avg_accuracy_pct: float
    reward: float
    next_state: DiscreteState
    feasible: bool = True


def contention_factor(node: DeviceSpec, active_requests: int, slots: int | None = None) -> int:
    """Slowdown multiplier with FIFO batching over `slots` parallel servers.

    Up to `slots` requests (default: the node's vCPUs) run unscaled; beyond
    that every request waits ceil(active / slots) service rounds.
    """
    if active_requests < 1:
        raise ValueError("active_requests must be >= 1")
    slots = node.vcpus if slots is None else slots
    return -(-active_requests // slots)


def average_accuracy(action: JointAction, pool) -> float:
    acc = {m.id: m.top5_accuracy for m in pool}
    try:
        return float(np.mean([acc[a.model] for a in action]))
    except KeyError as e:
        raise ConfigurationError(f"unknown model {e.args[0]!r}") from None


def meets_accuracy(avg_accuracy_pct: float, threshold: float, top_accuracy: float) -> bool:
    """Accuracy constraint check.

    Strictly above the threshold, except that a threshold at (or above) the
    best model's accuracy is met by running that model everywhere.
    """
    if threshold >= top_accuracy - ACCURACY_EPS:
        return avg_accuracy_pct >= top_accuracy - ACCURACY_EPS
    return avg_accuracy_pct > threshold + ACCURACY_EPS


def reward(avg_response_ms: float, avg_accuracy_pct: float, threshold, calibration: CalibrationTable,
           top_accuracy: float = 89.9) -> float:
    """Negative average response time, or the penalty when accuracy falls short."""
    t = threshold if isinstance(threshold, (int, float)) else threshold_value(threshold)
    if meets_accuracy(avg_accuracy_pct, float(t), top_accuracy):
        return -avg_response_ms
    return -calibration.max_response_penalty_ms


def response_time(device_index: int, action: DeviceAction, concurrency: Concurrency,
                  scenario: ScenarioConfig, calibration: CalibrationTable | None = None,
                  links: "tuple[Sequence[Link], Link] | None" = None) -> float:
    """Response time in ms of one request within a synchronous round."""
    cal = resolve_calibration(scenario, calibration)
    device_links, edge_link = links if links is not None else (scenario.device_links, scenario.edge_link)
    own = device_links[device_index]
    t = cal.orchestration_ms(own)
    if action.placement is Placement.LOCAL:
        node = scenario.device(Tier.END)
        k = concurrency.end[device_index]
        return t + cal.compute(action.model, Tier.END) * contention_factor(node, k, cal.slots(node))
    t += cal.hop_ms(own)
    if action.placement is Placement.EDGE:
        node = scenario.device(Tier.EDGE)
        return t + cal.compute(action.model, Tier.EDGE) * contention_factor(
            node, concurrency.edge, cal.slots(node))
    if action.placement is Placement.CLOUD:
        node = scenario.device(Tier.CLOUD)
        t += cal.hop_ms(edge_link)
        return t + cal.compute(action.model, Tier.CLOUD) * contention_factor(
            node, concurrency.cloud, cal.slots(node))
    raise ConfigurationError(f"unknown placement {action.placement!r}")


def mean_response(per: Sequence[float]) -> float:
    """Arithmetic mean taken relative to the first entry, so equal entries average exactly."""
    return per[0] + math.fsum(x - per[0] for x in per) / len(per)


def evaluate_joint(action: JointAction, scenario: ScenarioConfig,
                   calibration: CalibrationTable | None = None, links=None):
    """(per-device response, average response, average accuracy) of one round."""
    validate_joint(action, scenario)
    conc = Concurrency.of(action)
    per = tuple(response_time(i, a, conc, scenario, calibration, links) for i, a in enumerate(action))
    return per, mean_response(per), average_accuracy(action, scenario.model_pool)


@dataclass(frozen=True)
class OutcomeTable:
    """Outcomes of every joint action in a space for one link pattern."""

    space: ActionSpace
    per_device_ms: np.ndarray  # (size, N)
    avg_response_ms: np.ndarray  # (size,)
    avg_accuracy_pct: np.ndarray  # (size,)
    feasible: np.ndarray  # (size,) bool
    rewards: np.ndarray  # (size,)


def outcome_table(space: ActionSpace, scenario: ScenarioConfig,
                  calibration: CalibrationTable | None = None, links=None,
                  threshold=None) -> OutcomeTable:
    """Vectorized counterpart of `evaluate_joint` over a whole action space."""
    cal = resolve_calibration(scenario, calibration)
    device_links, edge_link = links if links is not None else (scenario.device_links, scenario.edge_link)
    thr = scenario.threshold if threshold is None else threshold_value(threshold)
    top_acc = scenario.top_model.top5_accuracy
    n = space.num_devices
    digits = space.digit_matrix()
    placements = np.array([a.placement is Placement.EDGE for a in space.per_device])
    is_edge = placements[digits]
    is_cloud = np.array([a.placement is Placement.CLOUD for a in space.per_device])[digits]
    k_edge = is_edge.sum(axis=1)
    k_cloud = is_cloud.sum(axis=1)
    end_node, edge_node, cloud_node = (scenario.device(t) for t in (Tier.END, Tier.EDGE, Tier.CLOUD))

    def factor(node, k):
        slots = cal.slots(node)
        return np.where(k > 0, -(-k // slots), 0)

    f_end = contention_factor(end_node, 1, cal.slots(end_node))
    f_edge = factor(edge_node, k_edge)
    f_cloud = factor(cloud_node, k_cloud)

    per = np.empty(digits.shape, dtype=float)
    for i in range(n):
        own = device_links[i]
        base = cal.orchestration_ms(own)
        col = np.empty(space.size, dtype=float)
        for k, a in enumerate(space.per_device):
            sel = digits[:, i] == k
            if not sel.any():
                continue
            if a.placement is Placement.LOCAL:
                col[sel] = base + cal.compute(a.model, Tier.END) * f_end
            elif a.placement is Placement.EDGE:
                col[sel] = base + cal.hop_ms(own) + cal.compute(a.model, Tier.EDGE) * f_edge[sel]
            else:
                col[sel] = (base + cal.hop_ms(own) + cal.hop_ms(edge_link)
                            + cal.compute(a.model, Tier.CLOUD) * f_cloud[sel])
        per[:, i] = col
    acc_of = np.array([scenario.model(a.model).top5_accuracy for a in space.per_device])
    avg_acc = acc_of[digits].mean(axis=1)
    avg = per[:, 0] + (per - per[:, :1]).mean(axis=1)
    if thr >= top_acc - ACCURACY_EPS:
        feasible = avg_acc >= top_acc - ACCURACY_EPS
    else:
        feasible = avg_acc > thr + ACCURACY_EPS
    rewards = np.where(feasible, -avg, -cal.max_response_penalty_ms)
    return OutcomeTable(space, per, avg, avg_acc, feasible, rewards)


def worst_case_response_ms(scenario: ScenarioConfig, calibration: CalibrationTable) -> float:
    """Upper bound on any request's response time for this user count."""
    n = scenario.num_end_devices
    top = scenario.top_model.id
    worst_link = max(calibration.orchestration_ms(Link.REGULAR), calibration.orchestration_ms(Link.WEAK))
    hop = calibration.hop_ms(Link.WEAK)
    local = max(calibration.compute(m.id, Tier.END) for m in scenario.model_pool)
    bounds = [local]
    for tier in (Tier.EDGE, Tier.CLOUD):
        node = scenario.device(tier)
        bounds.append(calibration.compute(top, tier) * contention_factor(node, n, calibration.slots(node)))
    return worst_link + 2 * hop + max(bounds)


class TraceWriter:
    """Streams step records as CSV rows."""

    header = ("step", "state", "action", "per_device_ms", "avg_response_ms", "avg_accuracy_pct", "reward")

    def __init__(self, stream: IO[str]):
        self._w = csv.writer(stream, lineterminator="\n")
        self._w.writerow(self.header)

    def write(self, step: int, state: DiscreteState, action: JointAction, outcome: StepOutcome) -> None:
        self._w.writerow([
            step, str(state), str(action),
            ";".join(f"{x:.4f}" for x in outcome.per_device_response_ms),
            f"{outcome.avg_response_ms:.4f}", f"{outcome.avg_accuracy_pct:.4f}", f"{outcome.reward:.4f}",
        ])


class Environment:
    """Synchronous-round simulator producing states, outcomes and rewards.

    After a round completes, the snapshot the monitors report is the
    background load plus `load_carryover` times the load the round itself
    placed on each node (0 means nodes are idle again when the next round
    is decided). Links flip Regular/Weak independently with probability
    `link_flip_prob` between rounds.
    """

    def __init__(self, scenario: ScenarioConfig, calibration: CalibrationTable | None = None, *,
                 seed: int | None = None, load_carryover: float = 0.0, memory_share: float = 0.2,
                 link_flip_prob: float = 0.0, background: ResourceSnapshot | None = None,
                 trace: IO[str] | None = None):
        if not 0.0 <= load_carryover <= 1.0:
            raise ConfigurationError("load_carryover must lie in [0, 1]")
        if not 0.0 <= link_flip_prob <= 1.0:
            raise ConfigurationError("link_flip_prob must lie in [0, 1]")
        self.load_carryover = load_carryover
        self.memory_share = memory_share
        self.link_flip_prob = link_flip_prob
        self.seed = scenario.rng_seed if seed is None else seed
        self._background = background
        self._calibration_override = calibration
        self._trace = TraceWriter(trace) if trace is not None else None
        self._tables: dict = {}
        self.apply_scenario(scenario)

    # -- configuration ---------------------------------------------------------

    def apply_scenario(self, scenario: "ScenarioConfig | str") -> None:
        """Switch link conditions (and everything else) to another scenario and reset."""
        if isinstance(scenario, str):
            current = getattr(self, "scenario", None)
            n = current.num_end_devices if current is not None else 5
            thr = current.accuracy_threshold if current is not None else "Max"
            scenario = load_scenario(scenario, num_end_devices=n, threshold=thr)
        self.scenario = scenario
        self.calibration = resolve_calibration(scenario, self._calibration_override)
        self.calibration.check_pool(scenario.model_pool)
        worst = worst_case_response_ms(scenario, self.calibration)
        if self.calibration.max_response_penalty_ms < worst:
            raise ConfigurationError(
                f"max_response_penalty_ms={self.calibration.max_response_penalty_ms} is below the "
                f"worst achievable response time {worst:.1f} ms for N={scenario.num_end_devices}")
        self.action_space = ActionSpace.full(scenario)
        self._tables.clear()
        if self._background is not None and self._background.num_end_devices != scenario.num_end_devices:
            raise ConfigurationError("background snapshot does not match the user count")
        self.reset()

    def reset(self) -> DiscreteState:
        self.rng = np.random.default_rng(self.seed)
        base = self._background or ResourceSnapshot.idle(self.scenario)
        self.snapshot = ResourceSnapshot(
            end=tuple(replace(n, link=l) for n, l in zip(base.end, self.scenario.device_links)),
            edge=replace(base.edge, link=self.scenario.edge_link),
            cloud=replace(base.cloud, link=Link.REGULAR),
        )
        self.state = discretize(self.snapshot, self.scenario)
        self.steps = 0
        return self.state

    @property
    def links(self) -> tuple[tuple[Link, ...], Link]:
        return tuple(Link.parse(n.link) for n in self.snapshot.end), Link.parse(self.snapshot.edge.link)

    @property
    def threshold(self) -> float:
        return self.scenario.threshold

    def clone(self) -> "Environment":
        other = Environment(self.scenario, self._calibration_override, seed=self.seed,
                            load_carryover=self.load_carryover, memory_share=self.memory_share,
                            link_flip_prob=self.link_flip_prob, background=self._background)
        other.snapshot, other.state, other.steps = self.snapshot, self.state, self.steps
        other.rng = np.random.default_rng()
        other.rng.bit_generator.state = self.rng.bit_generator.state
        return other

    # -- evaluation --------------------------------------------------------------

    def evaluate(self, action: JointAction, links=None):
        """Side-effect free (per-device ms, avg ms, avg accuracy) under the given links."""
        return evaluate_joint(action, self.scenario, self.calibration, links or self.links)

    def outcomes(self, state: DiscreteState | None = None, space: ActionSpace | None = None,
                 threshold=None) -> OutcomeTable:
        """Cached outcome table for every joint action under a state's link pattern."""
        links = (state.device_links, state.edge_link) if state is not None else self.links
        space = space or self.action_space
        thr = self.scenario.accuracy_threshold if threshold is None else threshold
        key = (links, space.per_device, thr)
        table = self._tables.get(key)
        if table is None:
            table = outcome_table(space, self.scenario, self.calibration, links, thr)
            self._tables[key] = table
        return table

    def round_snapshot(self, action: JointAction) -> ResourceSnapshot:
        """Load on every node while the round's requests execute."""
        conc = Concurrency.of(action)
        share = self.memory_share

        def load(node: NodeLoad, spec: DeviceSpec, k: int) -> NodeLoad:
            return replace(node, cpu_utilization=min(1.0, k / spec.vcpus),
                           memory_free_fraction=max(0.0, 1.0 - share * k))

        sc = self.scenario
        return ResourceSnapshot(
            end=tuple(load(n, sc.device(Tier.END), k) for n, k in zip(self.snapshot.end, conc.end)),
            edge=load(self.snapshot.edge, sc.device(Tier.EDGE), conc.edge),
            cloud=load(self.snapshot.cloud, sc.device(Tier.CLOUD), conc.cloud),
        )

    def _next_snapshot(self, action: JointAction) -> ResourceSnapshot:
        during = self.round_snapshot(action)
        base = self._background or ResourceSnapshot.idle(self.scenario)
        c = self.load_carryover

        def mix(b: NodeLoad, d: NodeLoad, current: NodeLoad) -> NodeLoad:
            cpu = min(1.0, b.cpu_utilization + c * d.cpu_utilization)
            mem = max(0.0, b.memory_free_fraction - c * (1.0 - d.memory_free_fraction))
            return NodeLoad(cpu, mem, current.link)

        end = tuple(mix(b, d, cur) for b, d, cur in zip(base.end, during.end, self.snapshot.end))
        edge = mix(base.edge, during.edge, self.snapshot.edge)
        cloud = mix(base.cloud, during.cloud, self.snapshot.cloud)
        if self.link_flip_prob > 0:
            flips = self.rng.random(len(end) + 1) < self.link_flip_prob

            def flip(node: NodeLoad, f: bool) -> NodeLoad:
                if not f:
                    return node
                other = Link.REGULAR if Link.parse(node.link) is Link.WEAK else Link.WEAK
                return replace(node, link=other)

            end = tuple(flip(n, bool(f)) for n, f in zip(end, flips[:-1]))
            edge = flip(edge, bool(flips[-1]))
        return ResourceSnapshot(end, edge, cloud)

    def step(self, action: "JointAction | int") -> StepOutcome:
        """Run one synchronous round and advance to the next state."""
        if isinstance(action, (int, np.integer)):
            action = self.action_space.decode(int(action))
        per, avg, acc = self.evaluate(action)
        top = self.scenario.top_model.top5_accuracy
        ok = meets_accuracy(acc, self.threshold, top)
        r = -avg if ok else -self.calibration.max_response_penalty_ms
        state = self.state
        self.snapshot = self._next_snapshot(action)
        self.state = discretize(self.snapshot, self.scenario)
        out = StepOutcome(per, avg, acc, r, self.state, ok)
        if self._trace is not None:
            self._trace.write(self.steps, state, action, out)
        self.steps += 1
        return out

    def step_index(self, index: int) -> tuple[float, DiscreteState]:
        """Fast path for training loops: reward and next state for a joint index."""
        table = self.outcomes()
        r = float(table.rewards[index])
        if self._trace is None and self.load_carryover == 0.0 and self.link_flip_prob == 0.0:
            self.steps += 1
            return r, self.state
        out = self.step(index)
        return out.reward, out.next_state


def trace_rows(text: str) -> list[dict]:
    return list(csv.DictReader(io.StringIO(text)))


__all__ = [
    "CalibrationTable", "Concurrency", "Environment", "OutcomeTable", "StepOutcome", "TraceWriter",
    "average_accuracy", "contention_factor", "default_calibration", "evaluate_joint",
    "meets_accuracy", "outcome_table", "response_time", "reward", "worst_case_response_ms",
]
