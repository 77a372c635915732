"""Versioned checkpoints holding all weights, optimizer state and the config digest."""

from __future__ import annotations

from pathlib import Path

import torch

from ..scenario import Scenario

from .trainer import LearnerBundle, TrainConfig

FORMAT_VERSION = 1


class CheckpointError(RuntimeError):
    pass


def save_checkpoint(path, bundle: LearnerBundle, optimizer: torch.optim.Optimizer | None,
                    scenario: Scenario, episode: int) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    blob = dict(format_version=FORMAT_VERSION, config=bundle.cfg.to_dict(),
                config_hash=bundle.cfg.digest(), head_arms=bundle.head_arms,
                obs_dim=bundle.disc.value.body[0].in_features,
                act_dim=bundle.cont.act_dim, scenario_repr=repr(scenario), episode=int(episode),
                weights=bundle.state_dict(),
                optimizer=optimizer.state_dict() if optimizer is not None else None)
    torch.save(blob, path)


def load_checkpoint(path) -> tuple[LearnerBundle, dict]:
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"checkpoint {path} does not exist")
    blob = torch.load(path, map_location="cpu", weights_only=False)
    if blob.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint format {blob.get('format_version')!r}")
    cfg = TrainConfig.from_dict(blob["config"])
    if cfg.digest() != blob["config_hash"]:
        raise CheckpointError("config hash mismatch; checkpoint is corrupt or was edited")
    bundle = LearnerBundle(blob["obs_dim"], blob["head_arms"], blob["act_dim"], cfg)
    bundle.load_state_dict(blob["weights"])
    return bundle, blob
