# %% [markdown]
# # Warm starts from the unconstrained policy
#
# A Q-table trained with no accuracy constraint seeds training at a stricter
# threshold. The comparison counts steps until the greedy policy matches the
# brute-force optimum.

# %%
from edgeorch.harness import RunConfig, transfer_experiment

# %%
for users, threshold in ((3, "P80"), (5, "P80"), (5, "P85")):
    report = transfer_experiment(RunConfig(users=users, threshold=threshold, budget=400_000))
    print(f"N={users} {threshold}: cold {report.cold.steps_to_convergence}, "
          f"warm {report.warm.steps_to_convergence}, speedup {report.speedup:.1f}x")
