"""Least-squares fit of the latency calibration to measured aggregates.

Every target row is one synchronous round (scenario, joint action) with its
measured average response time. Under the simulator's latency composition
the average is linear in the unknowns, so the fit is a non-negative least
squares problem in a reparametrization that builds the invariants in:

* End-tier compute is a cumulative sum of non-negative increments along the
  pool sorted by (MACs, Int8 before FP32), so cost never drops as MACs grow.
* Edge compute is cloud compute plus a non-negative gap.
* The weak request transmission is the regular one plus a non-negative gap.

Edge/cloud times of the models other than the top one are never observed;
they are filled in by scaling with the top model's tier ratios.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.optimize import nnls

from ..domain import (
    DEFAULT_POOL,
    JointAction,
    Link,
    Placement,
    ScenarioConfig,
    Tier,
    make_scenario,
)
from ..simenv import CalibrationTable, Concurrency, contention_factor, evaluate_joint

_DATA = Path(__file__).resolve().parent.parent / "data"
SHARED_SLOTS = {"End": 1, "Edge": 1, "Cloud": 1}
PRIOR_WEIGHT = 1e-3
# Fitted constants are rounded to a nanosecond so the written table does not
# depend on floating-point summation order inside the solver.
DIGITS = 6


@dataclass(frozen=True)
class Target:
    scenario: ScenarioConfig
    action: JointAction
    avg_response_ms: float
    source: str = ""

    @property
    def label(self) -> str:
        return f"{self.source}:{self.scenario.name}:N={self.scenario.num_end_devices}:{self.action}"


@dataclass(frozen=True)
class Residual:
    target: Target
    predicted_ms: float

    @property
    def relative(self) -> float:
        return (self.predicted_ms - self.target.avg_response_ms) / self.target.avg_response_ms


@dataclass(frozen=True)
class CalibrationFit:
    table: CalibrationTable
    residuals: tuple[Residual, ...]
    rms_ms: float

    @property
    def max_relative(self) -> float:
        return max(abs(r.relative) for r in self.residuals)

    def report(self) -> str:
        lines = [f"rms residual {self.rms_ms:.2f} ms, max relative {self.max_relative:.1%}"]
        for r in self.residuals:
            lines.append(f"{r.target.label:60s} target {r.target.avg_response_ms:8.2f} "
                         f"fit {r.predicted_ms:8.2f} ({r.relative:+.1%})")
        return "\n".join(lines)


def load_targets(path: "str | Path | None" = None) -> tuple[dict, list[Target]]:
    """Read a targets file; duplicated (scenario, action) rows are kept once."""
    doc = json.loads(Path(path or _DATA / "measured_targets.json").read_text())
    seen = set()
    targets = []
    for row in doc["rows"]:
        sc = make_scenario(row["scenario"], row["users"], row.get("threshold", "Max"))
        action = JointAction.parse(row["actions"])
        key = (sc.name, sc.num_end_devices, str(action))
        if key in seen:
            continue
        seen.add(key)
        targets.append(Target(sc, action, float(row["avg_response_ms"]), row.get("source", "")))
    return doc.get("fixed", {}), targets


def cost_order(pool) -> list[str]:
    return [m.id for m in sorted(pool, key=lambda m: (m.macs, m.numeric_format != "Int8"))]


class _Layout:
    """Column layout of the reparametrized unknowns."""

    def __init__(self, pool):
        self.order = cost_order(pool)
        self.top = max(pool, key=lambda m: m.top5_accuracy).id
        l = len(self.order)
        self.cloud, self.edge_gap, self.hop, self.weak_gap = l, l + 1, l + 2, l + 3
        self.size = l + 4

    def end_coef(self, model: str) -> np.ndarray:
        v = np.zeros(self.size)
        v[: self.order.index(model) + 1] = 1.0
        return v


def _fixed_values(fixed: dict) -> dict:
    return {
        "request_regular": fixed.get("transmit_request_ms", {}).get("Regular", 20.0),
        "decision": fixed.get("decision_ms", {"Regular": 1.0, "Weak": 2.0}),
        "update": fixed.get("broadcast_update_ms", {"Regular": 0.4, "Weak": 2.0}),
        "weak_extra": fixed.get("weak_extra_delay_ms", 20.0),
    }


def _row(target: Target, lay: _Layout, fx: dict, slots: dict) -> tuple[np.ndarray, float]:
    sc, action = target.scenario, target.action
    conc = Concurrency.of(action)
    coef = np.zeros(lay.size)
    const = 0.0
    for i, a in enumerate(action):
        link = sc.device_links[i]
        weak = link is Link.WEAK
        const += fx["request_regular"] + fx["decision"][link.value]
        coef[lay.weak_gap] += float(weak)
        if a.placement is Placement.LOCAL:
            f = contention_factor(sc.device(Tier.END), 1, slots.get("End"))
            coef += f * lay.end_coef(a.model)
            continue
        coef[lay.hop] += 1.0
        const += fx["weak_extra"] * weak
        if a.placement is Placement.EDGE:
            f = contention_factor(sc.device(Tier.EDGE), conc.edge, slots.get("Edge"))
            coef[lay.cloud] += f
            coef[lay.edge_gap] += f
        else:
            f = contention_factor(sc.device(Tier.CLOUD), conc.cloud, slots.get("Cloud"))
            coef[lay.hop] += 1.0
            const += fx["weak_extra"] * (sc.edge_link is Link.WEAK)
            coef[lay.cloud] += f
    n = len(action)
    return coef / n, const / n


def _priors(lay: _Layout, pool) -> list[tuple[np.ndarray, float]]:
    # Weak pull of each End cost toward linear-in-MACs interpolation between
    # its same-format neighbours; only decides directions the targets leave open.
    rows = []
    for fmt in {m.numeric_format for m in pool}:
        same = sorted((m for m in pool if m.numeric_format == fmt), key=lambda m: m.macs)
        for lo, mid, hi in zip(same, same[1:], same[2:]):
            if hi.macs == lo.macs:
                continue
            w = (mid.macs - lo.macs) / (hi.macs - lo.macs)
            c = lay.end_coef(mid.id) - (1 - w) * lay.end_coef(lo.id) - w * lay.end_coef(hi.id)
            rows.append((PRIOR_WEIGHT * c, 0.0))
    return rows


def calibrate(targets: "list[Target] | None" = None, *, fixed: dict | None = None,
              pool=DEFAULT_POOL, inference_slots: dict | None = None,
              max_response_penalty_ms: float = 2000.0, warn_above: float = 0.15) -> CalibrationFit:
    """Fit compute and network constants to target average response times.

    `inference_slots` None means the FIFO-batching contention over vCPUs;
    the shipped table uses one slot per node (see SHARED_SLOTS).
    """
    if targets is None:
        file_fixed, targets = load_targets()
        fixed = file_fixed if fixed is None else fixed
    fx = _fixed_values(fixed or {})
    slots = dict(inference_slots) if inference_slots is not None else {}
    lay = _Layout(pool)

    rows = [_row(t, lay, fx, slots) for t in targets]
    A = np.array([r[0] for r in rows])
    b = np.array([t.avg_response_ms - r[1] for t, r in zip(targets, rows)])
    prior = _priors(lay, pool)
    if prior:
        A = np.vstack([A] + [p[0][None, :] for p in prior])
        b = np.concatenate([b, [p[1] for p in prior]])
    x, _ = nnls(A, b, maxiter=50 * lay.size)
    x = np.round(x, DIGITS)

    end = np.cumsum(x[: len(lay.order)])
    end_ms = dict(zip(lay.order, end))
    cloud_top = x[lay.cloud]
    edge_top = cloud_top + x[lay.edge_gap]
    top_end = end_ms[lay.top]
    compute = {}
    for m in pool:
        e = float(end_ms[m.id])
        compute[m.id] = {"End": round(e, DIGITS), "Edge": round(e * edge_top / top_end, DIGITS),
                         "Cloud": round(e * cloud_top / top_end, DIGITS)}

    table = CalibrationTable(
        compute_ms=compute,
        transmit_request_ms={"Regular": fx["request_regular"],
                             "Weak": round(fx["request_regular"] + float(x[lay.weak_gap]), DIGITS)},
        decision_ms=dict(fx["decision"]),
        broadcast_update_ms=dict(fx["update"]),
        offload_hop_ms=float(x[lay.hop]),
        weak_extra_delay_ms=fx["weak_extra"],
        max_response_penalty_ms=max_response_penalty_ms,
        inference_slots={"End": slots.get("End"), "Edge": slots.get("Edge"), "Cloud": slots.get("Cloud")},
    )
    residuals = tuple(
        Residual(t, evaluate_joint(t.action, t.scenario, table)[1]) for t in targets)
    rms = float(np.sqrt(np.mean([(r.predicted_ms - r.target.avg_response_ms) ** 2 for r in residuals])))
    fit = CalibrationFit(table, residuals, rms)
    bad = [r for r in residuals if abs(r.relative) > warn_above]
    if bad:
        warnings.warn(
            f"{len(bad)} calibration rows off by more than {warn_above:.0%}:\n"
            + "\n".join(f"  {r.target.label}: {r.relative:+.1%}" for r in bad),
            stacklevel=2)
    return fit
