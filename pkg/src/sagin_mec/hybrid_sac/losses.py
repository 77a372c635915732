"""Soft actor-critic losses for the discrete (per-head categorical) and continuous agents.

Bootstrap and value targets are computed without gradient (semi-gradient
updates).  Every loss returns a scalar tensor; callers own the optimizers.
"""

from __future__ import annotations

import torch

from .networks import ContinuousAgent, DiscreteAgent


def _expected_head_q(probs: torch.Tensor, q: torch.Tensor) -> torch.Tensor:
    """E_{a~pi}[Q(s,a)] for the head-averaged critic, shape (batch,)."""
    return (probs * q).sum(-1).mean(-1)


def _entropy_term(probs: torch.Tensor, logp: torch.Tensor) -> torch.Tensor:
    """E_{a~pi}[log pi(a|s)] of the factored policy, shape (batch,)."""
    return (probs * logp).sum(-1).sum(-1)


def discrete_value_loss(agent: DiscreteAgent, obs: torch.Tensor, alpha: float) -> torch.Tensor:
    with torch.no_grad():
        probs, logp = agent.policy(obs)
        q = agent.q(obs)
        target = _expected_head_q(probs, q) - alpha * _entropy_term(probs, logp)
    v = agent.value(obs)
    return 0.5 * ((v - target) ** 2).mean()


def bootstrap_target(target_value, reward: torch.Tensor, next_obs: torch.Tensor,
                     done: torch.Tensor, gamma: float) -> torch.Tensor:
    with torch.no_grad():
        return reward + gamma * (1.0 - done) * target_value(next_obs)


def discrete_soft_q_loss(agent: DiscreteAgent, obs: torch.Tensor, arms: torch.Tensor,
                         reward: torch.Tensor, next_obs: torch.Tensor, done: torch.Tensor,
                         gamma: float) -> torch.Tensor:
    """Each specified head regresses Q_h(s, a_h) onto the shared target.

    ``arms`` holds -1 for heads a sample does not specify (decision-assist
    pairs name a single head).
    """
    y = bootstrap_target(agent.target_value, reward, next_obs, done, gamma)
    q = agent.q(obs)
    given = arms >= 0
    taken = q.gather(-1, arms.clamp(min=0).unsqueeze(-1)).squeeze(-1)
    sq = ((taken - y.unsqueeze(-1)) ** 2) * given
    per_sample = sq.sum(-1) / given.sum(-1).clamp(min=1)
    return 0.5 * per_sample.mean()


def discrete_policy_loss(agent: DiscreteAgent, obs: torch.Tensor, alpha: float) -> torch.Tensor:
    probs, logp = agent.policy(obs)
    q = agent.q(obs).detach()
    return (alpha * _entropy_term(probs, logp) - _expected_head_q(probs, q)).mean()


def continuous_value_loss(agent: ContinuousAgent, obs: torch.Tensor, alpha: float,
                          noise: torch.Tensor | None = None) -> torch.Tensor:
    with torch.no_grad():
        act, logp, _ = agent.policy.sample(obs, noise)
        target = agent.q(obs, act) - alpha * logp
    v = agent.value(obs)
    return 0.5 * ((v - target) ** 2).mean()


def continuous_soft_q_loss(agent: ContinuousAgent, obs: torch.Tensor, act: torch.Tensor,
                           reward: torch.Tensor, next_obs: torch.Tensor, done: torch.Tensor,
                           gamma: float) -> torch.Tensor:
    y = bootstrap_target(agent.target_value, reward, next_obs, done, gamma)
    return 0.5 * ((agent.q(obs, act) - y) ** 2).mean()


def continuous_policy_loss(agent: ContinuousAgent, obs: torch.Tensor, alpha: float,
                           noise: torch.Tensor | None = None) -> torch.Tensor:
    act, logp, _ = agent.policy.sample(obs, noise)
    return (alpha * logp - agent.q(obs, act)).mean()
