"""Two-layer fully connected network (ReLU hidden, linear scalar output).

Inputs may be a single feature vector or a (batch, features) matrix. All
arithmetic is float64 so that central-difference gradient checks are tight.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

PARAMS = ("w1", "b1", "w2", "b2")

# Hidden width per user count for the shipped DQN presets.
HIDDEN_WIDTHS = {3: 48, 4: 64, 5: 128}


@dataclass
class Mlp:
    w1: np.ndarray  # (hidden, inputs)
    b1: np.ndarray  # (hidden,)
    w2: np.ndarray  # (hidden,)
    b2: np.ndarray  # (1,)

    @property
    def input_size(self) -> int:
        return self.w1.shape[1]

    @property
    def hidden_size(self) -> int:
        return self.w1.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.input_size, self.hidden_size

    def params(self) -> dict[str, np.ndarray]:
        return {k: getattr(self, k) for k in PARAMS}

    def copy(self) -> "Mlp":
        return Mlp(*(getattr(self, k).copy() for k in PARAMS))

    def to_dict(self) -> dict:
        return {"input_size": self.input_size, "hidden_size": self.hidden_size,
                **{k: getattr(self, k).ravel().tolist() for k in PARAMS}}

    @classmethod
    def from_dict(cls, d: dict) -> "Mlp":
        n_in, h = int(d["input_size"]), int(d["hidden_size"])
        return cls(np.asarray(d["w1"], float).reshape(h, n_in), np.asarray(d["b1"], float),
                   np.asarray(d["w2"], float), np.asarray(d["b2"], float).reshape(1))

    def save(self, path: "str | Path") -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path: "str | Path") -> "Mlp":
        return cls.from_dict(json.loads(Path(path).read_text()))


def init_mlp(input_size: int, hidden_size: int, rng: np.random.Generator) -> Mlp:
    """Glorot-uniform weights, zero biases."""
    if input_size < 1 or hidden_size < 1:
        raise ValueError("layer sizes must be positive")
    a1 = np.sqrt(6.0 / (input_size + hidden_size))
    a2 = np.sqrt(6.0 / (hidden_size + 1))
    return Mlp(rng.uniform(-a1, a1, (hidden_size, input_size)), np.zeros(hidden_size),
               rng.uniform(-a2, a2, hidden_size), np.zeros(1))


def zeros_like(net: Mlp) -> dict[str, np.ndarray]:
    return {k: np.zeros_like(v) for k, v in net.params().items()}


def _as_batch(net: Mlp, x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != net.input_size:
        raise ValueError(f"expected inputs of length {net.input_size}, got shape {np.shape(x)}")
    return x, single


def forward(net: Mlp, x):
    """Q estimate for one input (returns float) or a batch (returns vector)."""
    xb, single = _as_batch(net, x)
    h = np.maximum(xb @ net.w1.T + net.b1, 0.0)
    q = h @ net.w2 + net.b2[0]
    return float(q[0]) if single else q


def mse_loss_and_grads(net: Mlp, inputs, targets) -> tuple[float, dict[str, np.ndarray]]:
    """Mean of (target - q)^2 over the batch and its gradient; targets are constants."""
    x, _ = _as_batch(net, inputs)
    t = np.asarray(targets, dtype=float).reshape(-1)
    if t.shape[0] != x.shape[0] or x.shape[0] == 0:
        raise ValueError("need one target per input and a non-empty batch")
    pre = x @ net.w1.T + net.b1
    h = np.maximum(pre, 0.0)
    q = h @ net.w2 + net.b2[0]
    err = q - t
    loss = float(np.mean(err ** 2))
    dq = 2.0 * err / x.shape[0]
    dh = np.outer(dq, net.w2) * (pre > 0)
    grads = {"w1": dh.T @ x, "b1": dh.sum(axis=0), "w2": h.T @ dq, "b2": np.array([dq.sum()])}
    return loss, grads


@dataclass(frozen=True)
class TdBatch:
    """Transitions already encoded as network inputs.

    `next_inputs[i]` holds one row per admissible next action of record i;
    an empty array marks a terminal record (no bootstrap).
    """

    inputs: np.ndarray
    rewards: np.ndarray
    next_inputs: tuple[np.ndarray, ...]


def td_targets(net: Mlp, batch: TdBatch, gamma: float) -> np.ndarray:
    boot = np.array([forward(net, nx).max() if len(nx) else 0.0 for nx in batch.next_inputs])
    return np.asarray(batch.rewards, dtype=float) + gamma * boot


def td_loss_and_grads(net: Mlp, batch: TdBatch, gamma: float) -> tuple[float, dict[str, np.ndarray]]:
    """Squared temporal-difference error; the bootstrap term carries no gradient."""
    if len(batch.rewards) == 0:
        raise ValueError("empty batch")
    return mse_loss_and_grads(net, batch.inputs, td_targets(net, batch, gamma))


def sgd_step(net: Mlp, grads: dict[str, np.ndarray], lr: float) -> None:
    for k in PARAMS:
        p = getattr(net, k)
        g = grads[k]
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} does not match {k} {p.shape}")
        p -= lr * g


def finite_diff_check(net: Mlp, x, epsilon: float = 1e-6, target: float = 0.0) -> float:
    """Largest relative error between analytic and central-difference gradients.

    The loss is (target - q(x))^2. Relative error per parameter array is
    ||analytic - numeric|| / (||analytic|| + ||numeric||), zero when both vanish.
    Large epsilon makes truncation error dominate.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    x = np.asarray(x, dtype=float)
    _, grads = mse_loss_and_grads(net, x[None, :], [target])
    worst = 0.0
    for k, p in net.params().items():
        num = np.zeros_like(p)
        flat, nflat = p.reshape(-1), num.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + epsilon
            up = (target - forward(net, x)) ** 2
            flat[i] = old - epsilon
            down = (target - forward(net, x)) ** 2
            flat[i] = old
            nflat[i] = (up - down) / (2 * epsilon)
        denom = np.linalg.norm(grads[k]) + np.linalg.norm(num)
        if denom > 0:
            worst = max(worst, float(np.linalg.norm(grads[k] - num) / denom))
    return worst


__all__ = [
    "HIDDEN_WIDTHS", "Mlp", "TdBatch", "finite_diff_check", "forward", "init_mlp",
    "mse_loss_and_grads", "sgd_step", "td_loss_and_grads", "td_targets", "zeros_like",
]
