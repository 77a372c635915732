"""Hybrid discrete/continuous soft actor-critic with decision-assist pairs."""

from .assist import decision_assist_pairs
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .losses import (continuous_policy_loss, continuous_soft_q_loss, continuous_value_loss,
                     discrete_policy_loss, discrete_soft_q_loss, discrete_value_loss)
from .mpo import MpoConfig, MpoReport, mpo_combine
from .networks import ContinuousAgent, DiscreteAgent, MlpSpec, soft_update
from .replay import ReplayStore
from .trainer import (DivergenceError, LearnerBundle, TrainConfig, Trainer, TrainResult,
                      evaluate_bundle, rollout, select_action, train, write_metrics_csv)

__all__ = [
    "decision_assist_pairs", "CheckpointError", "load_checkpoint", "save_checkpoint",
    "continuous_policy_loss", "continuous_soft_q_loss", "continuous_value_loss",
    "discrete_policy_loss", "discrete_soft_q_loss", "discrete_value_loss",
    "MpoConfig", "MpoReport", "mpo_combine", "ContinuousAgent", "DiscreteAgent", "MlpSpec",
    "soft_update", "ReplayStore", "DivergenceError", "LearnerBundle", "TrainConfig", "Trainer",
    "TrainResult", "evaluate_bundle", "rollout", "select_action", "train", "write_metrics_csv",
]
