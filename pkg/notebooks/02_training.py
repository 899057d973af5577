# %% [markdown]
# # Training the orchestrators
#
# Trains tabular Q-learning and the DQN for three users, then compares the
# converged Q-learning policy with the offload-only agent for five users at
# the 89% threshold.

# %%
from pathlib import Path

from edgeorch.harness import RunConfig, run_evaluation, run_training
from edgeorch.harness.evaluation import train_sota

FIGURES = Path(__file__).parent / "figures"

# %% Convergence for three users, Max threshold
reports = {kind: run_training(RunConfig(agent=kind, budget=20_000)) for kind in ("ql", "dqn", "sota")}
for kind, r in reports.items():
    print(f"{kind:5s} converged={r.converged} at step {r.steps_to_convergence} ({r.wall_clock_s:.1f} s)")

# %% Five users, 89% threshold, against the offload-only agent
for scenario in ("exp_a", "exp_d"):
    config = RunConfig(scenario=scenario, users=5, threshold="P89", budget=400_000)
    trained = run_training(config)
    report = run_evaluation(config, trained.agent, sota=train_sota(config).agent)
    print(scenario, " ".join(str(a) for a in report.decisions))
    print(f"  {report.avg_response_ms:.1f} ms at {report.avg_accuracy_pct:.2f}%, offload-only "
          f"{report.sota_avg_response_ms:.1f} ms, speedup {report.speedup_vs_sota:.2f}x")

# %% Optional figure: mean reward between checks
try:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
except ImportError:
    plt = None
if plt is not None:
    FIGURES.mkdir(exist_ok=True)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for kind, r in reports.items():
        steps, rewards = zip(*r.reward_curve[1:])
        ax.plot(steps, rewards, label=kind)
    ax.set_xlabel("step")
    ax.set_ylabel("mean reward")
    ax.legend()
    fig.tight_layout()
    fig.savefig(FIGURES / "reward_curves.png", dpi=120)
