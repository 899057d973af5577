# %% [markdown]
# # Latency model and brute-force optimum
#
# Walks through the calibrated response-time model: fixed placements as the
# number of users grows, then the fastest joint action per accuracy threshold.
# Run with `python notebooks/01_latency_model.py`; figures are written to
# `notebooks/figures/` when matplotlib is installed.

# %%
from pathlib import Path

from edgeorch.agents import FixedPolicy, fixed_policy
from edgeorch.domain import THRESHOLD_ORDER, make_scenario
from edgeorch.oracle import optimal_action
from edgeorch.simenv import Environment, default_calibration, evaluate_joint

FIGURES = Path(__file__).parent / "figures"

# %% Calibrated compute times (ms) per model and tier
cal = default_calibration()
for model, tiers in cal.compute_ms.items():
    print(model, "  ".join(f"{t}={v:7.1f}" for t, v in tiers.items()))
print("offload hop", round(cal.offload_hop_ms, 1), "ms")

# %% Fixed placements versus user count
curves = {p.value: [] for p in FixedPolicy}
for n in range(1, 6):
    sc = make_scenario("exp_a", n)
    for p in FixedPolicy:
        curves[p.value].append(evaluate_joint(fixed_policy(p, sc), sc)[1])
for name, ys in curves.items():
    print(f"{name:10s}", " ".join(f"{y:7.1f}" for y in ys))

# %% Brute-force optimum for five users in each scenario and threshold
for scenario in ("exp_a", "exp_b", "exp_c", "exp_d"):
    env = Environment(make_scenario(scenario, 5))
    for thr in THRESHOLD_ORDER:
        best = optimal_action(env, threshold=thr)
        print(f"{scenario} {thr:4s} {best.avg_response_ms:7.1f} ms {best.avg_accuracy_pct:5.2f}%  {best.action}")

# %% Optional figure
try:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
except ImportError:
    plt = None
if plt is not None:
    FIGURES.mkdir(exist_ok=True)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for name, ys in curves.items():
        ax.plot(range(1, 6), ys, marker="o", label=name)
    ax.set_xlabel("users")
    ax.set_ylabel("average response (ms)")
    ax.legend()
    fig.tight_layout()
    fig.savefig(FIGURES / "response_vs_users.png", dpi=120)
