"""Core value types shared by the simulator, the agents and the oracle.

Everything here is immutable. Joint actions are also addressable by an
integer index (mixed radix, device 0 most significant) so Q-tables and the
brute-force sweep can work on flat numpy arrays.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np


class ConfigurationError(ValueError):
    """Raised for invalid scenario, calibration or action definitions."""


class Tier(str, Enum):
    END = "End"
    EDGE = "Edge"
    CLOUD = "Cloud"


class Placement(str, Enum):
    LOCAL = "Local"
    EDGE = "Edge"
    CLOUD = "Cloud"

    @property
    def tier(self) -> Tier:
        return {Placement.LOCAL: Tier.END, Placement.EDGE: Tier.EDGE, Placement.CLOUD: Tier.CLOUD}[self]

    @property
    def short(self) -> str:
        return {Placement.LOCAL: "L", Placement.EDGE: "E", Placement.CLOUD: "C"}[self]


class Link(str, Enum):
    REGULAR = "Regular"
    WEAK = "Weak"

    @classmethod
    def parse(cls, value: "str | Link") -> "Link":
        if isinstance(value, Link):
            return value
        v = str(value).strip().lower()
        if v in ("r", "regular"):
            return cls.REGULAR
        if v in ("w", "weak"):
            return cls.WEAK
        raise ConfigurationError(f"unknown link condition {value!r}")


# Accuracy thresholds in percent. Min imposes no constraint; Max equals the
# top-5 accuracy of the most accurate pool model.
THRESHOLDS: dict[str, float] = {"Min": 0.0, "P80": 80.0, "P85": 85.0, "P89": 89.0, "Max": 89.9}
THRESHOLD_ORDER = ("Max", "P89", "P85", "P80", "Min")

_THRESHOLD_ALIASES = {
    "min": "Min", "max": "Max",
    "80": "P80", "80%": "P80", "p80": "P80",
    "85": "P85", "85%": "P85", "p85": "P85",
    "89": "P89", "89%": "P89", "p89": "P89",
}


def threshold_name(value: "str | float") -> str:
    key = str(value).strip().lower()
    if key in _THRESHOLD_ALIASES:
        return _THRESHOLD_ALIASES[key]
    try:
        num = float(key)
    except ValueError:
        raise ConfigurationError(f"unknown accuracy threshold {value!r}") from None
    for name, v in THRESHOLDS.items():
        if math.isclose(num, v):
            return name
    raise ConfigurationError(f"unknown accuracy threshold {value!r}")


def threshold_value(value: "str | float") -> float:
    return THRESHOLDS[threshold_name(value)]


@dataclass(frozen=True)
class ModelSpec:
    id: str
    macs: float  # millions of multiply-accumulates
    numeric_format: str  # "FP32" or "Int8"
    top1_accuracy: float
    top5_accuracy: float

    def __post_init__(self):
        if self.numeric_format not in ("FP32", "Int8"):
            raise ConfigurationError(f"{self.id}: unknown numeric format {self.numeric_format!r}")
        if not 0 < self.top5_accuracy <= 100:
            raise ConfigurationError(f"{self.id}: top-5 accuracy out of (0, 100]")
        if self.top1_accuracy > self.top5_accuracy:
            raise ConfigurationError(f"{self.id}: top-1 accuracy exceeds top-5 accuracy")


# MobileNetV1 variants: width multiplier 1.0/0.75/0.5/0.25 at 224px, FP32 then Int8.
DEFAULT_POOL: tuple[ModelSpec, ...] = (
    ModelSpec("d0", 569, "FP32", 70.9, 89.9),
    ModelSpec("d1", 317, "FP32", 68.4, 88.2),
    ModelSpec("d2", 150, "FP32", 63.3, 84.9),
    ModelSpec("d3", 41, "FP32", 49.8, 74.2),
    ModelSpec("d4", 569, "Int8", 70.1, 88.9),
    ModelSpec("d5", 317, "Int8", 66.8, 87.0),
    ModelSpec("d6", 150, "Int8", 60.7, 83.2),
    ModelSpec("d7", 41, "Int8", 48.0, 72.8),
)


@dataclass(frozen=True)
class DeviceSpec:
    tier: Tier
    vcpus: int
    memory_gib: float
    frequency_ghz: float

    def __post_init__(self):
        if self.vcpus < 1:
            raise ConfigurationError(f"{self.tier.value}: vcpus must be >= 1")


DEFAULT_DEVICES: dict[Tier, DeviceSpec] = {
    Tier.END: DeviceSpec(Tier.END, 1, 2.0, 2.3),
    Tier.EDGE: DeviceSpec(Tier.EDGE, 2, 4.0, 2.3),
    Tier.CLOUD: DeviceSpec(Tier.CLOUD, 4, 8.0, 2.3),
}

# Link pattern of S1..S5 and the edge node for each shipped scenario.
SCENARIO_LINKS: dict[str, tuple[str, ...]] = {
    "exp_a": ("R", "R", "R", "R", "R", "R"),
    "exp_b": ("R", "W", "R", "W", "R", "W"),
    "exp_c": ("W", "W", "W", "R", "R", "R"),
    "exp_d": ("W", "W", "W", "W", "W", "W"),
}
SCENARIO_NAMES = tuple(SCENARIO_LINKS)


def scenario_key(name: str) -> str:
    key = str(name).strip().lower().replace("-", "_").replace(" ", "_")
    if key in ("a", "b", "c", "d"):
        key = "exp_" + key
    if key not in SCENARIO_LINKS:
        raise ConfigurationError(f"unknown scenario {name!r}")
    return key


@dataclass(frozen=True)
class ScenarioConfig:
    """One experiment: user count, link pattern, model pool and constraint.

    `calibration` is left as None to use the shipped calibration table.
    """

    name: str
    num_end_devices: int
    device_links: tuple[Link, ...]
    edge_link: Link = Link.REGULAR
    model_pool: tuple[ModelSpec, ...] = DEFAULT_POOL
    accuracy_threshold: str = "Max"
    devices: tuple[DeviceSpec, DeviceSpec, DeviceSpec] = (
        DEFAULT_DEVICES[Tier.END], DEFAULT_DEVICES[Tier.EDGE], DEFAULT_DEVICES[Tier.CLOUD])
    busy_cutoff: float = 0.5
    calibration: Any = None
    rng_seed: int = 0

    def __post_init__(self):
        if self.num_end_devices < 1:
            raise ConfigurationError("num_end_devices must be >= 1")
        links = tuple(Link.parse(x) for x in self.device_links)
        if len(links) != self.num_end_devices:
            raise ConfigurationError(
                f"{len(links)} device links given for {self.num_end_devices} end devices")
        object.__setattr__(self, "device_links", links)
        object.__setattr__(self, "edge_link", Link.parse(self.edge_link))
        object.__setattr__(self, "accuracy_threshold", threshold_name(self.accuracy_threshold))
        if not self.model_pool:
            raise ConfigurationError("model pool is empty")
        ids = [m.id for m in self.model_pool]
        if len(set(ids)) != len(ids):
            raise ConfigurationError("duplicate model ids in pool")
        if not 0.0 < self.busy_cutoff < 1.0:
            raise ConfigurationError("busy_cutoff must lie in (0, 1)")
        tiers = tuple(d.tier for d in self.devices)
        if tiers != (Tier.END, Tier.EDGE, Tier.CLOUD):
            raise ConfigurationError("devices must be given as (End, Edge, Cloud)")

    @property
    def threshold(self) -> float:
        return THRESHOLDS[self.accuracy_threshold]

    @property
    def top_model(self) -> ModelSpec:
        """Most accurate model; the only one run on edge and cloud."""
        return max(self.model_pool, key=lambda m: m.top5_accuracy)

    def device(self, tier: Tier) -> DeviceSpec:
        return self.devices[(Tier.END, Tier.EDGE, Tier.CLOUD).index(tier)]

    def model(self, model_id: str) -> ModelSpec:
        for m in self.model_pool:
            if m.id == model_id:
                return m
        raise ConfigurationError(f"unknown model {model_id!r}")

    def with_threshold(self, threshold) -> "ScenarioConfig":
        return replace(self, accuracy_threshold=threshold_name(threshold))

    def with_users(self, n: int) -> "ScenarioConfig":
        """Same scenario restricted (or extended with Regular links) to n users."""
        links = list(self.device_links[:n]) + [Link.REGULAR] * max(0, n - len(self.device_links))
        return replace(self, num_end_devices=n, device_links=tuple(links))

    # -- serialization -------------------------------------------------------

    def to_dict(self) -> dict:
        d = {
            "name": self.name,
            "num_end_devices": self.num_end_devices,
            "device_links": [x.value for x in self.device_links],
            "edge_link": self.edge_link.value,
            "accuracy_threshold": self.accuracy_threshold,
            "busy_cutoff": self.busy_cutoff,
            "rng_seed": self.rng_seed,
            "devices": [
                {"tier": s.tier.value, "vcpus": s.vcpus, "memory_gib": s.memory_gib,
                 "frequency_ghz": s.frequency_ghz}
                for s in self.devices
            ],
            "model_pool": [
                {"id": m.id, "macs": m.macs, "numeric_format": m.numeric_format,
                 "top1_accuracy": m.top1_accuracy, "top5_accuracy": m.top5_accuracy}
                for m in self.model_pool
            ],
        }
        if self.calibration is not None:
            d["calibration"] = self.calibration.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        kwargs: dict[str, Any] = {
            "name": d.get("name", "custom"),
            "num_end_devices": int(d["num_end_devices"]),
            "device_links": tuple(d["device_links"]),
            "edge_link": d.get("edge_link", "Regular"),
            "accuracy_threshold": d.get("accuracy_threshold", "Max"),
            "busy_cutoff": float(d.get("busy_cutoff", 0.5)),
            "rng_seed": int(d.get("rng_seed", 0)),
        }
        if "model_pool" in d:
            kwargs["model_pool"] = tuple(ModelSpec(**m) for m in d["model_pool"])
        if "devices" in d:
            kwargs["devices"] = tuple(
                DeviceSpec(Tier(s["tier"]), int(s["vcpus"]), float(s["memory_gib"]),
                           float(s["frequency_ghz"]))
                for s in d["devices"]
            )
        if d.get("calibration") is not None:
            from .simenv import CalibrationTable

            kwargs["calibration"] = CalibrationTable.from_dict(d["calibration"])
        return cls(**kwargs)

    def save(self, path: "str | Path") -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path: "str | Path") -> "ScenarioConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


_DATA = Path(__file__).parent / "data"


def load_scenario(name_or_path: str, num_end_devices: int | None = None,
                  threshold: "str | float | None" = None) -> ScenarioConfig:
    """Load a shipped scenario (exp_a..exp_d) or a scenario file."""
    p = Path(name_or_path)
    if p.suffix == ".json" and p.exists():
        sc = ScenarioConfig.load(p)
    else:
        sc = ScenarioConfig.load(_DATA / "scenarios" / f"{scenario_key(name_or_path)}.json")
    if num_end_devices is not None:
        sc = sc.with_users(num_end_devices)
    if threshold is not None:
        sc = sc.with_threshold(threshold)
    return sc


def make_scenario(name: str, num_end_devices: int = 5, threshold: "str | float" = "Max",
                  **kwargs) -> ScenarioConfig:
    """Build a shipped scenario in code, without touching the data files."""
    key = scenario_key(name)
    pattern = SCENARIO_LINKS[key]
    if num_end_devices > 5:
        raise ConfigurationError("shipped scenarios define links for at most 5 users; use with_users")
    return ScenarioConfig(
        name=key, num_end_devices=num_end_devices,
        device_links=pattern[:num_end_devices], edge_link=pattern[5],
        accuracy_threshold=threshold, **kwargs)


# -- resource state ------------------------------------------------------------


@dataclass(frozen=True)
class NodeLoad:
    cpu_utilization: float = 0.0
    memory_free_fraction: float = 1.0
    link: Link = Link.REGULAR

    def __post_init__(self):
        if not 0.0 <= self.cpu_utilization <= 1.0:
            raise ConfigurationError("cpu_utilization outside [0, 1]")
        if not 0.0 <= self.memory_free_fraction <= 1.0:
            raise ConfigurationError("memory_free_fraction outside [0, 1]")


@dataclass(frozen=True)
class ResourceSnapshot:
    end: tuple[NodeLoad, ...]
    edge: NodeLoad
    cloud: NodeLoad

    @property
    def num_end_devices(self) -> int:
        return len(self.end)

    @classmethod
    def idle(cls, scenario: ScenarioConfig) -> "ResourceSnapshot":
        return cls(
            end=tuple(NodeLoad(link=x) for x in scenario.device_links),
            edge=NodeLoad(link=scenario.edge_link),
            cloud=NodeLoad(link=Link.REGULAR),
        )


EDGE_CLOUD_CPU_LEVELS = 9
AVAILABLE, BUSY = 0, 1
REGULAR, WEAK = 0, 1


@dataclass(frozen=True)
class DiscreteState:
    """Discretized global resource state.

    Component order is (P, M, B) for the edge, then the cloud, then each end
    device in turn. P is a 0..8 level on edge/cloud and Available(0)/Busy(1)
    on end devices; M is Available/Busy; B is Regular(0)/Weak(1).
    """

    levels: tuple[int, ...]

    def __post_init__(self):
        if len(self.levels) % 3 or len(self.levels) < 9:
            raise ConfigurationError("state length must be 3*(N+2) with N >= 1")
        for i, v in enumerate(self.levels):
            hi = EDGE_CLOUD_CPU_LEVELS - 1 if i in (0, 3) else 1
            if not 0 <= v <= hi:
                raise ConfigurationError(f"state component {i} out of range: {v}")

    @property
    def num_end_devices(self) -> int:
        return len(self.levels) // 3 - 2

    @property
    def edge_link(self) -> Link:
        return Link.WEAK if self.levels[2] else Link.REGULAR

    @property
    def device_links(self) -> tuple[Link, ...]:
        return tuple(Link.WEAK if self.levels[6 + 3 * i + 2] else Link.REGULAR
                     for i in range(self.num_end_devices))

    def features(self) -> np.ndarray:
        """Network-input encoding: CPU levels scaled to [0, 1], binary parts as is."""
        x = np.asarray(self.levels, dtype=float)
        x[0] /= EDGE_CLOUD_CPU_LEVELS - 1
        x[3] /= EDGE_CLOUD_CPU_LEVELS - 1
        return x

    def __str__(self) -> str:
        return "".join(str(v) for v in self.levels)


def _busy_if_above(u: float, cutoff: float) -> int:
    return BUSY if u > cutoff else AVAILABLE


def discretize(snapshot: ResourceSnapshot, scenario: ScenarioConfig) -> DiscreteState:
    """Map a continuous snapshot to the discrete state vector.

    End-device CPU/memory are Busy when utilization exceeds the cutoff or free
    memory drops below it; edge and cloud CPU use nine equal-width bins.
    """
    if snapshot.num_end_devices != scenario.num_end_devices:
        raise ConfigurationError("snapshot does not cover every end device")
    cut = scenario.busy_cutoff

    def mem(node: NodeLoad) -> int:
        return BUSY if node.memory_free_fraction < cut else AVAILABLE

    def link(node: NodeLoad) -> int:
        return WEAK if Link.parse(node.link) is Link.WEAK else REGULAR

    def cpu_level(u: float) -> int:
        return min(EDGE_CLOUD_CPU_LEVELS - 1, int(math.floor(EDGE_CLOUD_CPU_LEVELS * u)))

    levels: list[int] = []
    for node in (snapshot.edge, snapshot.cloud):
        levels += [cpu_level(node.cpu_utilization), mem(node), link(node)]
    for node in snapshot.end:
        levels += [_busy_if_above(node.cpu_utilization, cut), mem(node), link(node)]
    return DiscreteState(tuple(levels))


# -- actions -------------------------------------------------------------------


@dataclass(frozen=True)
class DeviceAction:
    placement: Placement
    model: str

    def __str__(self) -> str:
        return f"{self.model},{self.placement.short}"

    @classmethod
    def parse(cls, text: str) -> "DeviceAction":
        """Parse the tabular notation used in reports, e.g. ``d4,L`` or ``d0,C``."""
        model, _, where = text.replace(" ", "").partition(",")
        placement = {"L": Placement.LOCAL, "E": Placement.EDGE, "C": Placement.CLOUD}.get(where.upper())
        if placement is None:
            raise ConfigurationError(f"cannot parse device action {text!r}")
        return cls(placement, model)


@dataclass(frozen=True)
class JointAction:
    devices: tuple[DeviceAction, ...]

    def __len__(self) -> int:
        return len(self.devices)

    def __iter__(self):
        return iter(self.devices)

    def __getitem__(self, i: int) -> DeviceAction:
        return self.devices[i]

    def __str__(self) -> str:
        return " ".join("{" + str(a) + "}" for a in self.devices)

    @classmethod
    def parse(cls, items: "Sequence[str] | str") -> "JointAction":
        if isinstance(items, str):
            items = [s for s in items.replace("{", " ").replace("}", " ").split()]
        return cls(tuple(DeviceAction.parse(s) for s in items))


def validate_action(action: DeviceAction, scenario: ScenarioConfig) -> None:
    scenario.model(action.model)
    if action.placement is not Placement.LOCAL and action.model != scenario.top_model.id:
        raise ConfigurationError(
            f"offloaded requests must use {scenario.top_model.id}, got {action.model}")


def validate_joint(action: JointAction, scenario: ScenarioConfig) -> None:
    if len(action) != scenario.num_end_devices:
        raise ConfigurationError(
            f"joint action has {len(action)} entries for {scenario.num_end_devices} devices")
    for a in action:
        validate_action(a, scenario)


def enumerate_actions(scenario: ScenarioConfig) -> list[DeviceAction]:
    """Per-device actions in canonical order: Local with each pool model, then Edge, Cloud."""
    top = scenario.top_model.id
    actions = [DeviceAction(Placement.LOCAL, m.id) for m in scenario.model_pool]
    actions += [DeviceAction(Placement.EDGE, top), DeviceAction(Placement.CLOUD, top)]
    return actions


def offload_only_actions(scenario: ScenarioConfig) -> list[DeviceAction]:
    """The restricted action set of the offload-only baseline."""
    top = scenario.top_model.id
    return [DeviceAction(p, top) for p in (Placement.LOCAL, Placement.EDGE, Placement.CLOUD)]


@dataclass(frozen=True)
class ActionSpace:
    """Joint action space over a fixed per-device action list.

    Joint index i encodes per-device choices in base `len(per_device)`, with
    end device 0 as the most significant digit, so index order is the
    canonical tie-break order.
    """

    per_device: tuple[DeviceAction, ...]
    num_devices: int

    @property
    def size(self) -> int:
        return len(self.per_device) ** self.num_devices

    @property
    def radix(self) -> int:
        return len(self.per_device)

    def digits(self, index: int) -> tuple[int, ...]:
        if not 0 <= index < self.size:
            raise IndexError(index)
        out = []
        for _ in range(self.num_devices):
            index, r = divmod(index, self.radix)
            out.append(r)
        return tuple(reversed(out))

    def decode(self, index: int) -> JointAction:
        return JointAction(tuple(self.per_device[d] for d in self.digits(index)))

    def encode(self, action: JointAction) -> int:
        if len(action) != self.num_devices:
            raise ConfigurationError("joint action length does not match the action space")
        idx = 0
        for a in action:
            try:
                idx = idx * self.radix + self.per_device.index(a)
            except ValueError:
                raise ConfigurationError(f"{a} is not in this action space") from None
        return idx

    def digit_matrix(self) -> np.ndarray:
        """(size, num_devices) array of per-device action indices for every joint index."""
        idx = np.arange(self.size, dtype=np.int64)
        cols = []
        for k in range(self.num_devices - 1, -1, -1):
            cols.append((idx // self.radix ** k) % self.radix)
        return np.stack(cols, axis=1)

    def __iter__(self) -> Iterable[JointAction]:
        return (self.decode(i) for i in range(self.size))

    @classmethod
    def full(cls, scenario: ScenarioConfig) -> "ActionSpace":
        return cls(tuple(enumerate_actions(scenario)), scenario.num_end_devices)

    @classmethod
    def offload_only(cls, scenario: ScenarioConfig) -> "ActionSpace":
        return cls(tuple(offload_only_actions(scenario)), scenario.num_end_devices)


# Discrete level counts per node: end (CPU, network, memory), edge/cloud likewise.
END_LEVELS = (2, 2, 2)
SERVER_LEVELS = (EDGE_CLOUD_CPU_LEVELS, 2, 2)
MAX_SPACE_SIZE = 2 ** 63 - 1


def state_action_space_size(scenario: ScenarioConfig | None = None, *,
                            num_end_devices: int | None = None,
                            num_actions: int | None = None,
                            end_levels: Sequence[int] = END_LEVELS,
                            server_levels: Sequence[int] = SERVER_LEVELS) -> int:
    """Size of the state x action space a brute-force search has to cover.

    Raises OverflowError once the count leaves the signed 64-bit range.
    """
    n = num_end_devices if num_end_devices is not None else scenario.num_end_devices
    if num_actions is None:
        num_actions = len(scenario.model_pool) + 2
    size = math.prod(end_levels) ** n * math.prod(server_levels) ** 2 * num_actions ** n
    if size > MAX_SPACE_SIZE:
        raise OverflowError(f"state-action space for N={n} exceeds 64-bit range ({size:.3e})")
    return size


__all__ = [
    "ActionSpace", "ConfigurationError", "DEFAULT_DEVICES", "DEFAULT_POOL", "DeviceAction",
    "DeviceSpec", "DiscreteState", "JointAction", "Link", "ModelSpec", "NodeLoad", "Placement",
    "ResourceSnapshot", "SCENARIO_NAMES", "ScenarioConfig", "THRESHOLDS", "THRESHOLD_ORDER",
    "Tier", "discretize", "enumerate_actions", "load_scenario", "make_scenario",
    "offload_only_actions", "scenario_key", "state_action_space_size", "threshold_name",
    "threshold_value", "validate_action", "validate_joint",
]
