"""Small MLPs and the two agents' network sets."""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass

import torch
from torch import nn
from torch.nn import functional as F

ACTIVATIONS = {"tanh": nn.Tanh, "elu": nn.ELU, "silu": nn.SiLU, "relu": nn.ReLU}
NEG_INF = -1e9
LOG_STD_MIN, LOG_STD_MAX = -5.0, 2.0


@dataclass(frozen=True)
class MlpSpec:
    hidden: tuple[int, ...] = (128, 128)
    activation: str = "silu"
    head: str = "scalar"        # scalar | categorical-logits | squashed-gaussian

    def __post_init__(self) -> None:
        if len(self.hidden) < 1 or any(int(w) <= 0 for w in self.hidden):
            raise ValueError("MlpSpec needs at least one hidden layer of positive width")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.head not in ("scalar", "categorical-logits", "squashed-gaussian"):
            raise ValueError(f"unknown head kind {self.head!r}")


def mlp(in_dim: int, out_dim: int, spec: MlpSpec) -> nn.Sequential:
    layers: list[nn.Module] = []
    prev = in_dim
    for w in spec.hidden:
        layers += [nn.Linear(prev, int(w)), ACTIVATIONS[spec.activation]()]
        prev = int(w)
    layers.append(nn.Linear(prev, out_dim))
    return nn.Sequential(*layers)


class ValueNet(nn.Module):
    def __init__(self, obs_dim: int, spec: MlpSpec):
        super().__init__()
        self.body = mlp(obs_dim, 1, spec)

    def forward(self, obs: torch.Tensor) -> torch.Tensor:
        return self.body(obs).squeeze(-1)


class HeadQNet(nn.Module):
    """Per-head, per-arm soft-Q values, shape (batch, heads, max_arms)."""

    def __init__(self, obs_dim: int, n_heads: int, max_arms: int, spec: MlpSpec):
        super().__init__()
        self.n_heads, self.max_arms = n_heads, max_arms
        self.body = mlp(obs_dim, n_heads * max_arms, spec)

    def forward(self, obs: torch.Tensor) -> torch.Tensor:
        return self.body(obs).view(-1, self.n_heads, self.max_arms)


class CategoricalPolicy(nn.Module):
    """Independent categorical per head; padding arms carry zero probability."""

    def __init__(self, obs_dim: int, head_arms: list[int], spec: MlpSpec):
        super().__init__()
        self.n_heads, self.max_arms = len(head_arms), max(head_arms)
        self.body = mlp(obs_dim, self.n_heads * self.max_arms, spec)
        valid = torch.zeros(self.n_heads, self.max_arms, dtype=torch.bool)
        for h, a in enumerate(head_arms):
            valid[h, :a] = True
        self.register_buffer("valid", valid)

    def logits(self, obs: torch.Tensor) -> torch.Tensor:
        raw = self.body(obs).view(-1, self.n_heads, self.max_arms)
        return raw.masked_fill(~self.valid, NEG_INF)

    def forward(self, obs: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """Return (probs, log_probs), both (batch, heads, max_arms)."""
        logp = F.log_softmax(self.logits(obs), dim=-1)
        return logp.exp(), logp


class SquashedGaussianPolicy(nn.Module):
    def __init__(self, obs_dim: int, act_dim: int, spec: MlpSpec):
        super().__init__()
        self.act_dim = act_dim
        self.body = mlp(obs_dim, 2 * act_dim, spec)

    def dist_params(self, obs: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        mean, log_std = self.body(obs).chunk(2, dim=-1)
        return mean, log_std.clamp(LOG_STD_MIN, LOG_STD_MAX)

    @staticmethod
    def log_prob_pre_tanh(u: torch.Tensor, mean: torch.Tensor, log_std: torch.Tensor) -> torch.Tensor:
        z = (u - mean) / log_std.exp()
        return (-0.5 * z * z - log_std - 0.5 * math.log(2 * math.pi)).sum(-1)

    @staticmethod
    def squash_correction(u: torch.Tensor) -> torch.Tensor:
        # log(1 - tanh(u)^2), written in a numerically stable form
        return (2.0 * (math.log(2.0) - u - F.softplus(-2.0 * u))).sum(-1)

    def sample(self, obs: torch.Tensor, noise: torch.Tensor | None = None):
        """Reparameterized draw; returns (action in (-1, 1), log-density, pre-tanh sample)."""
        mean, log_std = self.dist_params(obs)
        if noise is None:
            noise = torch.randn_like(mean)
        u = mean + log_std.exp() * noise
        logp = self.log_prob_pre_tanh(u, mean, log_std) - self.squash_correction(u)
        return torch.tanh(u), logp, u

    def deterministic(self, obs: torch.Tensor) -> torch.Tensor:
        return torch.tanh(self.dist_params(obs)[0])


class ActionQNet(nn.Module):
    def __init__(self, obs_dim: int, act_dim: int, spec: MlpSpec):
        super().__init__()
        self.body = mlp(obs_dim + act_dim, 1, spec)

    def forward(self, obs: torch.Tensor, act: torch.Tensor) -> torch.Tensor:
        return self.body(torch.cat([obs, act], dim=-1)).squeeze(-1)


class DiscreteAgent(nn.Module):
    """Value, target value, per-head soft-Q and per-head categorical policy."""

    def __init__(self, obs_dim: int, head_arms: list[int], spec: MlpSpec):
        super().__init__()
        self.head_arms = list(head_arms)
        n_heads, max_arms = len(head_arms), max(head_arms)
        self.value = ValueNet(obs_dim, spec)
        self.target_value = copy.deepcopy(self.value).requires_grad_(False)
        self.q = HeadQNet(obs_dim, n_heads, max_arms, spec)
        self.policy = CategoricalPolicy(obs_dim, head_arms, spec)


class ContinuousAgent(nn.Module):
    def __init__(self, obs_dim: int, act_dim: int, spec: MlpSpec):
        super().__init__()
        self.act_dim = act_dim
        self.value = ValueNet(obs_dim, spec)
        self.target_value = copy.deepcopy(self.value).requires_grad_(False)
        self.q = ActionQNet(obs_dim, act_dim, spec)
        self.policy = SquashedGaussianPolicy(obs_dim, act_dim, spec)


@torch.no_grad()
def soft_update(target: nn.Module, source: nn.Module, rate: float) -> None:
    for t, s in zip(target.parameters(), source.parameters()):
        t.mul_(1.0 - rate).add_(s, alpha=rate)
