"""Training loops, evaluation, sweeps, calibration and the command line."""

from .evaluation import EvalReport, run_evaluation
from .sweep import SweepBundle, default_configs, sweep
from .training import RunConfig, TrainingReport, run_training
from .transfer import TransferReport, transfer_experiment

__all__ = [
    "EvalReport", "RunConfig", "SweepBundle", "TrainingReport", "TransferReport", "default_configs",
    "run_evaluation", "run_training", "sweep", "transfer_experiment",
]
