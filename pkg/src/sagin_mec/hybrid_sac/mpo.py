"""Combine the two agents' policies into one hybrid policy with a trust-region E/M step.

The critic of the joint action is taken as ``mean_h Q_h(s, a_h) + Q_c(s, a_c)``,
so the non-parametric target ``prior * exp(Q/eta)`` factorizes exactly: each
discrete head is reweighted in closed form over its arms, and the continuous
factor through ``K`` samples drawn from the prior.  The M-step fits a copy of
the prior networks to those targets and a backtracking line search in
parameter space keeps the KL to the prior below the per-factor thresholds.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass

import numpy as np
import torch
from scipy.optimize import minimize_scalar
from scipy.special import logsumexp

from .networks import CategoricalPolicy, SquashedGaussianPolicy


@dataclass(frozen=True)
class MpoConfig:
    epsilon: float = 0.1          # E-step KL bound for the temperature dual
    n_samples: int = 16
    chi_discrete: float = 0.01
    chi_continuous: float = 0.01
    m_steps: int = 5
    lr: float = 1e-3
    eta: float | None = None      # fixed temperature; None solves the dual
    eta_bounds: tuple[float, float] = (1e-4, 1e4)
    backtrack_steps: int = 10

    def __post_init__(self) -> None:
        if not (self.chi_discrete > 0 and self.chi_continuous > 0 and self.epsilon > 0):
            raise ValueError("KL thresholds must be positive")
        if self.n_samples < 1 or self.m_steps < 0:
            raise ValueError("n_samples must be >= 1 and m_steps >= 0")


@dataclass
class MpoReport:
    eta: float
    kl_discrete: float
    kl_continuous: float
    accepted_discrete: bool
    accepted_continuous: bool
    step_discrete: float
    step_continuous: float


def discrete_targets(q_heads: np.ndarray, prior: np.ndarray, eta: float) -> np.ndarray:
    """q_h(a) proportional to prior_h(a) exp(Q_h(a) / (H eta)); zero-prior arms stay zero."""
    n_heads = q_heads.shape[-2]
    centered = q_heads - q_heads.max(axis=-1, keepdims=True)
    with np.errstate(divide="ignore"):
        logits = np.log(prior) + centered / (n_heads * eta)
    logits = logits - logsumexp(logits, axis=-1, keepdims=True)
    return np.exp(logits)


def continuous_weights(q_samples: np.ndarray, eta: float) -> np.ndarray:
    z = q_samples / eta
    z = z - logsumexp(z, axis=-1, keepdims=True)
    return np.exp(z)


def temperature_dual(eta: float, q_heads: np.ndarray, prior: np.ndarray,
                     q_samples: np.ndarray, epsilon: float) -> float:
    """eta*eps + eta * E_s log E_{a~prior} exp(Q(s,a)/eta) for the factored critic."""
    n_heads = q_heads.shape[-2]
    with np.errstate(divide="ignore"):
        lp = np.log(prior)
    disc = logsumexp(lp + q_heads / (n_heads * eta), axis=-1).sum(-1)
    cont = logsumexp(q_samples / eta, axis=-1) - math.log(q_samples.shape[-1])
    return float(eta * epsilon + eta * np.mean(disc + cont))


def solve_temperature(q_heads, prior, q_samples, epsilon, bounds) -> float:
    lo, hi = np.log(bounds[0]), np.log(bounds[1])
    res = minimize_scalar(lambda x: temperature_dual(math.exp(x), q_heads, prior, q_samples, epsilon),
                          bounds=(lo, hi), method="bounded", options={"xatol": 1e-6})
    return float(math.exp(res.x))


def categorical_kl(p_logp: tuple[torch.Tensor, torch.Tensor],
                   q_logp: torch.Tensor) -> torch.Tensor:
    """Mean over states of the head-summed KL(p || q)."""
    p, lp = p_logp
    terms = torch.where(p > 0, p * (lp - q_logp), torch.zeros_like(p))
    return terms.sum(-1).sum(-1).mean()


def gaussian_kl(mean_p, log_std_p, mean_q, log_std_q) -> torch.Tensor:
    """Mean over states of KL(N_p || N_q) for diagonal Gaussians, summed over dims."""
    var_p, var_q = (2 * log_std_p).exp(), (2 * log_std_q).exp()
    kl = log_std_q - log_std_p + (var_p + (mean_p - mean_q) ** 2) / (2 * var_q) - 0.5
    return kl.sum(-1).mean()


def _gaussian_cross_entropy(mean_p, log_std_p, mean_q, log_std_q) -> torch.Tensor:
    """E_{N_p}[-log N_q], summed over dims and averaged over states."""
    var_p, var_q = (2 * log_std_p).exp(), (2 * log_std_q).exp()
    ce = log_std_q + 0.5 * math.log(2 * math.pi) + (var_p + (mean_p - mean_q) ** 2) / (2 * var_q)
    return ce.sum(-1).mean()


def _interpolate(net, prior_params, new_params, beta: float) -> None:
    with torch.no_grad():
        for p, a, b in zip(net.parameters(), prior_params, new_params):
            p.copy_(a + beta * (b - a))


def _line_search(net, prior_params, kl_fn, chi: float, steps: int) -> tuple[bool, float, float]:
    """Shrink the update until kl_fn() <= chi; revert to the prior on failure."""
    new_params = [p.detach().clone() for p in net.parameters()]
    beta = 1.0
    for _ in range(steps + 1):
        _interpolate(net, prior_params, new_params, beta)
        kl = float(kl_fn())
        if kl <= chi:
            return True, beta, kl
        beta *= 0.5
    _interpolate(net, prior_params, new_params, 0.0)
    return False, 0.0, float(kl_fn())


def mpo_combine(prior_discrete: CategoricalPolicy, prior_continuous: SquashedGaussianPolicy,
                q_discrete, q_continuous, obs: torch.Tensor, cfg: MpoConfig,
                generator: torch.Generator | None = None,
                init_discrete: CategoricalPolicy | None = None,
                init_continuous: SquashedGaussianPolicy | None = None):
    """Return refined copies ``(discrete, continuous, report)`` of the prior policies.

    ``q_discrete(obs)`` gives (batch, heads, arms) values and
    ``q_continuous(obs, act)`` a (batch,) value; both are treated as fixed.
    """
    with torch.no_grad():
        probs_bar, logp_bar = prior_discrete(obs)
        q_heads = q_discrete(obs)
        mean_bar, log_std_bar = prior_continuous.dist_params(obs)
        B, D = mean_bar.shape
        K = cfg.n_samples
        noise = torch.randn((K, B, D), generator=generator, dtype=mean_bar.dtype)
        u = mean_bar.unsqueeze(0) + log_std_bar.exp().unsqueeze(0) * noise      # (K, B, D)
        obs_rep = obs.unsqueeze(0).expand(K, -1, -1).reshape(K * B, -1)
        q_samp = q_continuous(obs_rep, torch.tanh(u).reshape(K * B, D)).view(K, B).T  # (B, K)

    qh = q_heads.double().numpy()
    pr = probs_bar.double().numpy()
    qs = q_samp.double().numpy()
    if cfg.eta is not None:
        eta = float(cfg.eta)
    else:
        eta = solve_temperature(qh, pr, qs, cfg.epsilon, cfg.eta_bounds)
    target_d = torch.as_tensor(discrete_targets(qh, pr, eta), dtype=probs_bar.dtype)
    w = torch.as_tensor(continuous_weights(qs, eta), dtype=mean_bar.dtype)          # (B, K)
    w_centered = w - 1.0 / K

    disc = copy.deepcopy(init_discrete if init_discrete is not None else prior_discrete)
    cont = copy.deepcopy(init_continuous if init_continuous is not None else prior_continuous)
    prior_d_params = [p.detach().clone() for p in prior_discrete.parameters()]
    prior_c_params = [p.detach().clone() for p in prior_continuous.parameters()]
    opt = torch.optim.Adam(list(disc.parameters()) + list(cont.parameters()), lr=cfg.lr)
    u_t = u.permute(1, 0, 2)                                                         # (B, K, D)
    for _ in range(cfg.m_steps):
        opt.zero_grad()
        _, logp = disc(obs)
        loss_d = -(target_d * torch.where(target_d > 0, logp, torch.zeros_like(logp))).sum(-1).sum(-1).mean()
        mean, log_std = cont.dist_params(obs)
        logn = SquashedGaussianPolicy.log_prob_pre_tanh(u_t, mean.unsqueeze(1), log_std.unsqueeze(1))
        # weighted fit written against the prior's exact cross-entropy so that
        # uniform weights leave the prior as a stationary point
        loss_c = -(w_centered * logn).sum(-1).mean() + _gaussian_cross_entropy(
            mean_bar, log_std_bar, mean, log_std)
        (loss_d + loss_c).backward()
        opt.step()

    def kl_d():
        with torch.no_grad():
            return categorical_kl((probs_bar, logp_bar), disc(obs)[1])

    def kl_c():
        with torch.no_grad():
            m, s = cont.dist_params(obs)
            return gaussian_kl(mean_bar, log_std_bar, m, s)

    ok_d, beta_d, kd = _line_search(disc, prior_d_params, kl_d, cfg.chi_discrete, cfg.backtrack_steps)
    ok_c, beta_c, kc = _line_search(cont, prior_c_params, kl_c, cfg.chi_continuous, cfg.backtrack_steps)
    report = MpoReport(eta, kd, kc, ok_d, ok_c, beta_d, beta_c)
    return disc, cont, report
