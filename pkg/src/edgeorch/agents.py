"""Orchestration agents: tabular Q-learning, DQN with replay, fixed baselines."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, replace
from enum import Enum
from pathlib import Path

import numpy as np

from .domain import (
    ActionSpace,
    ConfigurationError,
    DeviceAction,
    DiscreteState,
    JointAction,
    Placement,
    ScenarioConfig,
)
from .nn import HIDDEN_WIDTHS, Mlp, init_mlp, mse_loss_and_grads, sgd_step

# Exploration decay presets keyed by user count.
QL_EPSILON_DECAY = {1: 1e-1, 2: 1e-2, 3: 1e-2, 4: 1e-3, 5: 1e-4}
DQN_EPSILON_DECAY = {3: 0.4, 4: 0.7, 5: 0.9}


@dataclass(frozen=True)
class HyperParams:
    alpha: float
    gamma: float = 0.1
    epsilon: float = 1.0
    epsilon_decay: float = 1e-2
    epsilon_min: float = 0.01
    decay_mode: str = "subtract"  # "subtract" per step or "multiply" per epoch
    epoch_steps: int = 1
    batch_size: int = 64
    buffer_capacity: int = 1000
    hidden_size: int = 48
    reward_scale: float = 1.0
    reward_shift: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ConfigurationError("alpha must lie in (0, 1]")
        if not 0.0 <= self.gamma < 1.0:
            raise ConfigurationError("gamma must lie in [0, 1)")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ConfigurationError("epsilon must lie in [0, 1]")
        if not 0.0 <= self.epsilon_min <= 1.0:
            raise ConfigurationError("epsilon_min must lie in [0, 1]")
        if self.decay_mode not in ("subtract", "multiply"):
            raise ConfigurationError(f"unknown decay mode {self.decay_mode!r}")
        if self.epoch_steps < 1 or self.batch_size < 1 or self.buffer_capacity < 1:
            raise ConfigurationError("epoch_steps, batch_size and buffer_capacity must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)


def ql_params(num_end_devices: int, **overrides) -> HyperParams:
    decay = QL_EPSILON_DECAY.get(num_end_devices, QL_EPSILON_DECAY[5])
    return replace(HyperParams(alpha=0.9, epsilon_decay=decay), **overrides)


def dqn_params(num_end_devices: int, **overrides) -> HyperParams:
    n = min(max(num_end_devices, 3), 5)
    base = HyperParams(alpha=1e-3, epsilon_decay=DQN_EPSILON_DECAY[n], decay_mode="multiply",
                       epoch_steps=4000, hidden_size=HIDDEN_WIDTHS[n], reward_scale=0.01,
                       reward_shift=2000.0)
    return replace(base, **overrides)


# -- tabular ---------------------------------------------------------------------


class QTable:
    """Q-values per visited state; unseen pairs read as 0.

    Each visited state owns a dense row over the joint space for fast argmax,
    plus a mask of which (state, action) pairs were actually written.
    """

    def __init__(self, num_actions: int):
        self.num_actions = num_actions
        self._rows: dict[DiscreteState, np.ndarray] = {}
        self._visited: dict[DiscreteState, np.ndarray] = {}

    def row(self, state: DiscreteState) -> np.ndarray:
        r = self._rows.get(state)
        if r is None:
            return np.zeros(self.num_actions)
        return r

    def _writable(self, state: DiscreteState) -> np.ndarray:
        r = self._rows.get(state)
        if r is None:
            r = self._rows[state] = np.zeros(self.num_actions)
            self._visited[state] = np.zeros(self.num_actions, dtype=bool)
        return r

    def get(self, state: DiscreteState, action: int) -> float:
        return float(self.row(state)[action])

    def set(self, state: DiscreteState, action: int, value: float) -> None:
        self._writable(state)[action] = value
        self._visited[state][action] = True

    def max(self, state: DiscreteState) -> float:
        r = self._rows.get(state)
        return 0.0 if r is None else float(r.max())

    def greedy(self, state: DiscreteState) -> int:
        """Argmax with ties going to the lowest index."""
        r = self._rows.get(state)
        return 0 if r is None else int(np.argmax(r))

    def states(self) -> list[DiscreteState]:
        return list(self._rows)

    def __len__(self) -> int:
        return int(sum(v.sum() for v in self._visited.values()))

    def copy(self) -> "QTable":
        out = QTable(self.num_actions)
        out._rows = {s: r.copy() for s, r in self._rows.items()}
        out._visited = {s: v.copy() for s, v in self._visited.items()}
        return out

    def to_dict(self) -> dict:
        entries = {}
        for s, r in self._rows.items():
            idx = np.flatnonzero(self._visited[s])
            entries[",".join(map(str, s.levels))] = {str(i): float(r[i]) for i in idx}
        return {"num_actions": self.num_actions, "entries": entries}

    @classmethod
    def from_dict(cls, d: dict) -> "QTable":
        t = cls(int(d["num_actions"]))
        for key, row in d["entries"].items():
            s = DiscreteState(tuple(int(v) for v in key.split(",")))
            for i, v in row.items():
                t.set(s, int(i), float(v))
        return t

    def save(self, path: "str | Path") -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path: "str | Path") -> "QTable":
        return cls.from_dict(json.loads(Path(path).read_text()))


def q_update(table: QTable, s: DiscreteState, a: int, r: float, s_next: DiscreteState,
             params: HyperParams) -> float:
    """One max-bootstrap Q-learning update; returns the new Q(s, a)."""
    q = table.get(s, a)
    new = q + params.alpha * (r + params.gamma * table.max(s_next) - q)
    table.set(s, a, new)
    return new


# -- replay ----------------------------------------------------------------------


@dataclass(frozen=True)
class Transition:
    state: DiscreteState
    action: int
    reward: float
    next_state: DiscreteState


class ReplayBuffer:
    """Fixed-capacity FIFO; pushing into a full buffer evicts the oldest record."""

    def __init__(self, capacity: int = 1000):
        if capacity < 1:
            raise ConfigurationError("capacity must be >= 1")
        self.capacity = capacity
        self._data: list = []
        self._head = 0  # index of the oldest record once full

    def __len__(self) -> int:
        return len(self._data)

    def push(self, record) -> None:
        if len(self._data) < self.capacity:
            self._data.append(record)
        else:
            self._data[self._head] = record
            self._head = (self._head + 1) % self.capacity

    def records(self) -> list:
        """Contents oldest first."""
        return self._data[self._head:] + self._data[:self._head]

    def sample_indices(self, batch_size: int, rng: np.random.Generator) -> np.ndarray:
        """Distinct positions (oldest = 0) drawn uniformly without replacement."""
        k = min(batch_size, len(self._data))
        return rng.choice(len(self._data), size=k, replace=False)

    def sample(self, batch_size: int, rng: np.random.Generator) -> list:
        ordered = self.records()
        return [ordered[i] for i in self.sample_indices(batch_size, rng)]


# -- agents ----------------------------------------------------------------------


class Agent:
    """Epsilon-greedy policy over a joint action space."""

    kind = "agent"

    def __init__(self, space: ActionSpace, params: HyperParams):
        self.space = space
        self.params = params
        self.epsilon = params.epsilon
        self.steps = 0
        self._env_index: np.ndarray | None = None
        self._env_space: ActionSpace | None = None

    def q_values(self, state: DiscreteState) -> np.ndarray:
        raise NotImplementedError

    def greedy(self, state: DiscreteState) -> int:
        return int(np.argmax(self.q_values(state)))

    def greedy_action(self, state: DiscreteState) -> JointAction:
        return self.space.decode(self.greedy(state))

    def env_index(self, index: int, env_space: ActionSpace) -> int:
        """Translate an index of this agent's space to the environment's space."""
        if env_space == self.space:
            return index
        if self._env_space != env_space:
            self._env_index = np.array([env_space.encode(a) for a in self.space])
            self._env_space = env_space
        return int(self._env_index[index])


def select_action(agent: Agent, state: DiscreteState, rng: np.random.Generator) -> int:
    """Random index with probability epsilon, otherwise the greedy index."""
    if agent.epsilon > 0 and rng.random() < agent.epsilon:
        return int(rng.integers(agent.space.size))
    return agent.greedy(state)


def decay_epsilon(agent: Agent) -> None:
    p = agent.params
    if p.decay_mode == "subtract":
        agent.epsilon = max(p.epsilon_min, agent.epsilon - p.epsilon_decay)
    else:
        agent.epsilon = max(p.epsilon_min, agent.epsilon * p.epsilon_decay)


class QLearningAgent(Agent):
    kind = "ql"

    def __init__(self, space: ActionSpace, params: HyperParams, table: QTable | None = None):
        super().__init__(space, params)
        self.table = table if table is not None else QTable(space.size)

    def q_values(self, state):
        return self.table.row(state)

    def greedy(self, state):
        return self.table.greedy(state)

    def observe(self, s, a, r, s_next) -> None:
        q_update(self.table, s, a, r, s_next, self.params)
        self.steps += 1
        if self.steps % self.params.epoch_steps == 0:
            decay_epsilon(self)


def ql_step(agent: QLearningAgent, env, rng: np.random.Generator) -> float:
    s = env.state
    a = select_action(agent, s, rng)
    r, s_next = env.step_index(agent.env_index(a, env.action_space))
    agent.observe(s, a, r, s_next)
    return r


class DQNAgent(Agent):
    """Q(s, a) from an Mlp over [state features, per-device one-hot action, action shares].

    The trailing block holds, for each per-device action, the fraction of
    devices that chose it; it spares the network from having to discover
    the permutation symmetry of shared edge/cloud load and of the average
    accuracy.
    """

    kind = "dqn"

    def __init__(self, space: ActionSpace, params: HyperParams, net: Mlp | None = None,
                 rng: np.random.Generator | None = None, state_size: int | None = None):
        super().__init__(space, params)
        self.state_size = state_size if state_size is not None else 3 * (space.num_devices + 2)
        n_in = self.state_size + (space.num_devices + 1) * space.radix
        if net is None:
            net = init_mlp(n_in, params.hidden_size, rng or np.random.default_rng(0))
        if net.input_size != n_in:
            raise ConfigurationError(f"network expects {net.input_size} inputs, space needs {n_in}")
        self.net = net
        self.buffer = ReplayBuffer(params.buffer_capacity)
        self._digits = space.digit_matrix()
        self._offsets = self.state_size + np.arange(space.num_devices) * space.radix
        self._count_offset = self.state_size + space.num_devices * space.radix
        self._feature_cache: dict = {}
        self._q_cache: dict = {}

    def encode(self, state: DiscreteState, actions) -> np.ndarray:
        """Network inputs for one state and an array of joint indices."""
        actions = np.atleast_1d(np.asarray(actions, dtype=np.int64))
        return self.encode_many(np.tile(state.features(), (len(actions), 1)), actions)

    def encode_many(self, features: np.ndarray, actions: np.ndarray) -> np.ndarray:
        """Network inputs for row-aligned state features and joint indices."""
        n = self.space.num_devices
        x = np.zeros((len(actions), self.net.input_size))
        x[:, : self.state_size] = features
        digits = self._digits[actions]
        np.put_along_axis(x, digits + self._offsets, 1.0, axis=1)
        rows = np.repeat(np.arange(len(actions)), n)
        np.add.at(x, (rows, (digits + self._count_offset).ravel()), 1.0 / n)
        return x

    def _features(self, state: DiscreteState) -> np.ndarray:
        f = self._feature_cache.get(state)
        if f is None:
            f = self._feature_cache[state] = state.features()
        return f

    def q_values(self, state):
        cached = self._q_cache.get(state)
        if cached is not None:
            return cached
        # First-layer contribution of a joint action is a sum of one column per
        # device; build all sums by broadcasting over the mixed-radix digits.
        n, radix = self.space.num_devices, self.space.radix
        w1 = self.net.w1
        per_dev = w1[:, self.state_size:self._count_offset].T.reshape(n, radix, -1)
        per_dev = per_dev + w1[:, self._count_offset:].T[None, :, :] / n
        pre = per_dev[0] + (w1[:, : self.state_size] @ self._features(state) + self.net.b1)
        for i in range(1, n):
            pre = (pre[:, None, :] + per_dev[i][None, :, :]).reshape(-1, pre.shape[-1])
        q = np.maximum(pre, 0.0) @ self.net.w2 + self.net.b2[0]
        self._q_cache[state] = q
        return q

    def train_batch(self, rng: np.random.Generator) -> float | None:
        need = min(self.params.batch_size, self.buffer.capacity)
        if len(self.buffer) < need:
            return None
        batch = self.buffer.sample(need, rng)
        boot = {}
        for t in batch:
            if t.next_state not in boot:
                boot[t.next_state] = float(self.q_values(t.next_state).max())
        p = self.params
        targets = np.array([(t.reward + p.reward_shift) * p.reward_scale + p.gamma * boot[t.next_state]
                            for t in batch])
        inputs = self.encode_many(np.array([self._features(t.state) for t in batch]),
                                  np.array([t.action for t in batch], dtype=np.int64))
        loss, grads = mse_loss_and_grads(self.net, inputs, targets)
        sgd_step(self.net, grads, self.params.alpha)
        self._q_cache.clear()
        return loss


def dqn_step(agent: DQNAgent, env, rng: np.random.Generator) -> float:
    s = env.state
    a = select_action(agent, s, rng)
    r, s_next = env.step_index(agent.env_index(a, env.action_space))
    agent.buffer.push(Transition(s, a, r, s_next))
    agent.train_batch(rng)
    agent.steps += 1
    if agent.steps % agent.params.epoch_steps == 0:
        decay_epsilon(agent)
    return r


def agent_step(agent: Agent, env, rng: np.random.Generator) -> float:
    if isinstance(agent, DQNAgent):
        return dqn_step(agent, env, rng)
    return ql_step(agent, env, rng)


# -- baselines -------------------------------------------------------------------


class FixedPolicy(str, Enum):
    DEVICE_ONLY = "DeviceOnly"
    EDGE_ONLY = "EdgeOnly"
    CLOUD_ONLY = "CloudOnly"


_FIXED_PLACEMENT = {FixedPolicy.DEVICE_ONLY: Placement.LOCAL, FixedPolicy.EDGE_ONLY: Placement.EDGE,
                    FixedPolicy.CLOUD_ONLY: Placement.CLOUD}


def fixed_policy(kind: "FixedPolicy | str", scenario: ScenarioConfig) -> JointAction:
    placement = _FIXED_PLACEMENT[FixedPolicy(kind)]
    top = scenario.top_model.id
    return JointAction(tuple(DeviceAction(placement, top) for _ in range(scenario.num_end_devices)))


def make_agent(kind: str, scenario: ScenarioConfig, params: HyperParams | None = None,
               seed: int = 0) -> Agent:
    """'ql', 'dqn' or 'sota' (Q-learning restricted to offloading with the top model)."""
    n = scenario.num_end_devices
    if kind == "ql":
        return QLearningAgent(ActionSpace.full(scenario), params or ql_params(n))
    if kind == "sota":
        return sota_agent(scenario, params)
    if kind == "dqn":
        return DQNAgent(ActionSpace.full(scenario), params or dqn_params(n),
                        rng=np.random.default_rng(seed))
    raise ConfigurationError(f"unknown agent kind {kind!r}")


def sota_agent(scenario: ScenarioConfig, params: HyperParams | None = None) -> QLearningAgent:
    return QLearningAgent(ActionSpace.offload_only(scenario),
                          params or ql_params(scenario.num_end_devices))


def warm_start(agent: Agent, source) -> None:
    """Initialize the agent's Q-function from another agent, a QTable, an Mlp or a file."""
    if isinstance(source, (str, Path)):
        d = json.loads(Path(source).read_text())
        source = QTable.from_dict(d) if "entries" in d else Mlp.from_dict(d)
    if isinstance(source, QLearningAgent):
        source = source.table
    elif isinstance(source, DQNAgent):
        source = source.net
    if isinstance(agent, QLearningAgent) and isinstance(source, QTable):
        if source.num_actions != agent.space.size:
            raise ConfigurationError(
                f"Q-table has {source.num_actions} actions, agent space has {agent.space.size}")
        agent.table = source.copy()
    elif isinstance(agent, DQNAgent) and isinstance(source, Mlp):
        if source.shape != agent.net.shape:
            raise ConfigurationError(f"network shape {source.shape} != agent shape {agent.net.shape}")
        agent.net = source.copy()
        agent._q_cache.clear()
    else:
        raise ConfigurationError(
            f"cannot warm-start a {type(agent).__name__} from {type(source).__name__}")


__all__ = [
    "Agent", "DQNAgent", "DQN_EPSILON_DECAY", "FixedPolicy", "HyperParams", "QLearningAgent",
    "QL_EPSILON_DECAY", "QTable", "ReplayBuffer", "Transition", "agent_step", "decay_epsilon",
    "dqn_params", "dqn_step", "fixed_policy", "make_agent", "q_update", "ql_params", "ql_step",
    "select_action", "sota_agent", "warm_start",
]
