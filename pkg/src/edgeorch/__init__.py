"""Reinforcement-learning orchestration of inference requests over end, edge and cloud tiers.

Modules: `domain` (types), `simenv` (latency model and environment), `nn`
(small MLP), `agents` (Q-learning, DQN, baselines), `oracle` (brute-force
optimum) and `harness` (training, evaluation, sweeps, calibration, CLI).
"""

__version__ = "0.1.0"
