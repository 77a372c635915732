"""Training loop: collect with the hybrid policy, update both SAC agents, then recombine."""

from __future__ import annotations

import copy
import csv
import dataclasses
import hashlib
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .. import environment as env
from ..scenario import Scenario
from .assist import decision_assist_pairs
from .losses import (continuous_policy_loss, continuous_soft_q_loss, continuous_value_loss,
                     discrete_policy_loss, discrete_soft_q_loss, discrete_value_loss)
from .mpo import MpoConfig, mpo_combine
from .networks import ContinuousAgent, DiscreteAgent, MlpSpec, soft_update
from .replay import ReplayStore

METRICS_FIELDS = ("episode", "reward", "energy_J", "latency_s", "violations", "feasible",
                  "eval_energy_J", "eval_latency_s", "eval_feasible",
                  "loss_v_disc", "loss_q_disc", "loss_pi_disc",
                  "loss_v_cont", "loss_q_cont", "loss_pi_cont", "mpo_eta",
                  "mpo_kl_disc", "mpo_kl_cont")


class DivergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    hidden: tuple[int, ...] = (128, 128)
    activation: str = "silu"
    lr: float = 3e-4
    batch_size: int = 256
    replay_capacity: int = 100_000
    soft_update_rate: float = 5e-3
    alpha_discrete: float = 0.2
    alpha_continuous: float = 0.2
    discount: float = 0.99
    reward_scale: float = 1.0
    updates_per_episode: int = 1
    warmup_transitions: int = 256
    assist: bool = True
    assist_ratio: float = 0.25
    mask_in_training: bool = False
    use_mpo: bool = True
    mpo: MpoConfig = field(default_factory=MpoConfig)
    mpo_every: int = 1
    lr_decay_episodes: int = 0      # linear decay to lr_final_frac * lr; 0 keeps lr constant
    lr_final_frac: float = 0.1
    mpo_batch: int = 64
    eval_every: int = 0
    fixed_instance: bool = True
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0 < self.discount <= 1:
            raise ValueError("discount must lie in (0, 1]")
        if self.replay_capacity <= self.batch_size:
            raise ValueError("replay capacity must exceed the batch size")
        if self.batch_size < 1 or self.updates_per_episode < 0:
            raise ValueError("batch_size must be >= 1 and updates_per_episode >= 0")
        if not 0 <= self.assist_ratio <= 1:
            raise ValueError("assist_ratio must lie in [0, 1]")
        if self.mpo_every < 1 or self.mpo_batch < 1:
            raise ValueError("mpo_every and mpo_batch must be >= 1")
        if self.alpha_discrete < 0 or self.alpha_continuous < 0:
            raise ValueError("entropy temperatures must be nonnegative")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True, default=str).encode()).hexdigest()[:16]

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        if "mpo" in d and isinstance(d["mpo"], dict):
            mpo = dict(d["mpo"])
            if "eta_bounds" in mpo:
                mpo["eta_bounds"] = tuple(mpo["eta_bounds"])
            d["mpo"] = MpoConfig(**mpo)
        if "hidden" in d:
            d["hidden"] = tuple(d["hidden"])
        return cls(**d)


class LearnerBundle(nn.Module):
    """Both agents plus the acting hybrid policy (discrete and continuous factors)."""

    def __init__(self, obs_dim: int, head_arms: list[int], act_dim: int, cfg: TrainConfig):
        super().__init__()
        spec = MlpSpec(tuple(cfg.hidden), cfg.activation)
        self.cfg = cfg
        self.head_arms = list(head_arms)
        self.disc = DiscreteAgent(obs_dim, head_arms, spec)
        self.cont = ContinuousAgent(obs_dim, act_dim, spec)
        self.hybrid_disc = copy.deepcopy(self.disc.policy).requires_grad_(False)
        self.hybrid_cont = copy.deepcopy(self.cont.policy).requires_grad_(False)

    @property
    def n_discrete_choices(self) -> int:
        return int(sum(self.head_arms))


def trainable_parameters(bundle: LearnerBundle) -> list[nn.Parameter]:
    """Parameters updated by the SAC step (target nets and the hybrid policy excluded)."""
    mods = (bundle.disc.value, bundle.disc.q, bundle.disc.policy,
            bundle.cont.value, bundle.cont.q, bundle.cont.policy)
    return [p for m in mods for p in m.parameters()]


def build_optimizer(bundle: LearnerBundle, lr: float) -> torch.optim.Optimizer:
    # Adam acts elementwise, so one instance over every network equals one per network
    return torch.optim.Adam(trainable_parameters(bundle), lr=lr)


def select_action(bundle: LearnerBundle, obs: np.ndarray, mask: np.ndarray | None,
                  deterministic: bool, generator: torch.Generator | None = None) -> env.HybridAction:
    """Act with the hybrid policy; ``mask`` removes unavailable arms when given."""
    with torch.no_grad():
        o = torch.as_tensor(obs, dtype=torch.float32).unsqueeze(0)
        probs = bundle.hybrid_disc(o)[0][0]
        if mask is not None:
            m = torch.as_tensor(mask)
            masked = probs * m
            empty = masked.sum(-1, keepdim=True) <= 0
            probs = torch.where(empty, probs, masked / masked.sum(-1, keepdim=True).clamp(min=1e-30))
        if deterministic:
            arms = probs.argmax(-1)
        else:
            arms = torch.multinomial(probs, 1, generator=generator).squeeze(-1)
        if deterministic:
            cont = bundle.hybrid_cont.deterministic(o)[0]
        else:
            mean, log_std = bundle.hybrid_cont.dist_params(o)
            noise = torch.randn(mean.shape, generator=generator)
            cont = torch.tanh(mean + log_std.exp() * noise)[0]
    return env.HybridAction(arms.numpy().astype(np.int64), cont.double().numpy().clip(-1.0, 1.0))


def rollout(scn: Scenario, policy, seed: int) -> dict:
    """Run one episode with ``policy(state, obs, mask) -> HybridAction``."""
    state = env.reset(scn, seed)
    total_reward, n_viol = 0.0, 0
    done = False
    while not done:
        obs = env.observe(scn, state)
        mask = env.action_mask(scn, state)
        action = policy(state, obs, mask)
        state, r, done, info = env.step(scn, state, action)
        total_reward += r
        n_viol += len(info["violations"])
    feasible = not state.violations
    return dict(reward=total_reward, energy_J=state.total_energy,
                latency_s=float(state.task_latency.sum()) / scn.tasks_per_user,
                violations=n_viol, feasible=feasible, state=state)


def evaluate_bundle(scn: Scenario, bundle: LearnerBundle, seed: int) -> dict:
    return rollout(scn, lambda st, o, m: select_action(bundle, o, m.discrete, True), seed)


@dataclass
class TrainResult:
    bundle: LearnerBundle
    optimizer: torch.optim.Optimizer
    metrics: list[dict]
    episodes_run: int
    wall_s: float


class Trainer:
    def __init__(self, scn: Scenario, cfg: TrainConfig):
        self.scn, self.cfg = scn, cfg
        torch.manual_seed(cfg.seed)
        self.obs_dim = env.observation_dim(scn)
        self.bundle = LearnerBundle(self.obs_dim, scn.head_arms, scn.continuous_dim, cfg)
        self.opt = build_optimizer(self.bundle, cfg.lr)
        self.replay = ReplayStore(cfg.replay_capacity, self.obs_dim, scn.n_heads,
                                  scn.continuous_dim, seed=cfg.seed)
        self.assist = ReplayStore(cfg.replay_capacity, self.obs_dim, scn.n_heads,
                                  scn.continuous_dim, seed=cfg.seed + 1)
        self.gen = torch.Generator().manual_seed(cfg.seed)
        self.episode = 0
        self.last_losses: dict[str, float] = {}
        self.last_mpo = None
        self._updates_since_combine = 0

    # ------------------------------------------------------------------
    def _tensors(self, batch: dict) -> dict[str, torch.Tensor]:
        return {k: torch.as_tensor(v) for k, v in batch.items()}

    def update(self) -> dict[str, float]:
        cfg, b, opt = self.cfg, self.bundle, self.opt
        t = self._tensors(self.replay.sample(cfg.batch_size))
        obs, nobs, arms, act, rew, done = (t["obs"], t["next_obs"], t["arms"], t["cont"],
                                          t["reward"], t["done"])
        q_obs, q_arms, q_rew, q_nobs, q_done = obs, arms, rew, nobs, done
        n_assist = int(round(cfg.batch_size * cfg.assist_ratio)) if cfg.assist else 0
        if n_assist > 0 and len(self.assist) > 0:
            a = self._tensors(self.assist.sample(n_assist))
            q_obs = torch.cat([obs, a["obs"]])
            q_arms = torch.cat([arms, a["arms"]])
            q_rew = torch.cat([rew, a["reward"]])
            q_nobs = torch.cat([nobs, a["next_obs"]])
            q_done = torch.cat([done, a["done"]])

        noise_v = torch.randn(act.shape, generator=self.gen)
        noise_pi = torch.randn(act.shape, generator=self.gen)
        terms = {
            "loss_v_disc": discrete_value_loss(b.disc, obs, cfg.alpha_discrete),
            "loss_q_disc": discrete_soft_q_loss(b.disc, q_obs, q_arms, q_rew, q_nobs, q_done,
                                                cfg.discount),
            "loss_pi_disc": discrete_policy_loss(b.disc, obs, cfg.alpha_discrete),
            "loss_v_cont": continuous_value_loss(b.cont, obs, cfg.alpha_continuous, noise_v),
            "loss_q_cont": continuous_soft_q_loss(b.cont, obs, act, rew, nobs, done, cfg.discount),
        }
        # the policy term must not push gradient into the critic it differentiates through
        b.cont.q.requires_grad_(False)
        try:
            terms["loss_pi_cont"] = continuous_policy_loss(b.cont, obs, cfg.alpha_continuous, noise_pi)
        finally:
            b.cont.q.requires_grad_(True)
        losses = {k: float(v.detach()) for k, v in terms.items()}
        bad = [k for k, v in losses.items() if not math.isfinite(v)]
        if bad:
            raise DivergenceError(f"{bad} not finite at episode {self.episode}: {losses}; "
                                  f"previous {self.last_losses}")
        # parameter sets are disjoint, so the summed loss yields each loss's own gradient
        opt.zero_grad()
        sum(terms.values()).backward()
        opt.step()
        soft_update(b.disc.target_value, b.disc.value, cfg.soft_update_rate)
        soft_update(b.cont.target_value, b.cont.value, cfg.soft_update_rate)
        self.last_losses = losses
        self._last_obs = obs
        return losses

    def combine(self) -> None:
        b = self.bundle
        if not self.cfg.use_mpo:
            b.hybrid_disc.load_state_dict(b.disc.policy.state_dict())
            b.hybrid_cont.load_state_dict(b.cont.policy.state_dict())
            return
        obs = self._last_obs[: self.cfg.mpo_batch]
        disc, cont, report = mpo_combine(b.disc.policy, b.cont.policy, b.disc.q, b.cont.q, obs, self.cfg.mpo,
                                         generator=self.gen)
        if report.kl_discrete > self.cfg.mpo.chi_discrete + 1e-12 or \
                report.kl_continuous > self.cfg.mpo.chi_continuous + 1e-12:
            raise AssertionError(f"hybrid policy left its trust region: {report}")
        b.hybrid_disc.load_state_dict(disc.state_dict())
        b.hybrid_cont.load_state_dict(cont.state_dict())
        self.last_mpo = report

    # ------------------------------------------------------------------
    def collect_episode(self) -> dict:
        scn, cfg = self.scn, self.cfg
        seed = scn.seed if cfg.fixed_instance else scn.seed + self.episode
        state = env.reset(scn, seed)
        obs = env.observe(scn, state)
        total_reward, n_viol, done = 0.0, 0, False
        while not done:
            mask = env.action_mask(scn, state)
            action = select_action(self.bundle, obs, mask.discrete if cfg.mask_in_training else None,
                                   False, self.gen)
            state, r, done, info = env.step(scn, state, action)
            nobs = env.observe(scn, state)
            self.replay.add(env.Transition(obs, action, r * cfg.reward_scale, nobs, done,
                                           mask.discrete))
            if cfg.assist:
                for tr in decision_assist_pairs(obs, mask.discrete, scn.head_arms,
                                                scn.continuous_dim):
                    self.assist.add(tr)
            total_reward += r
            n_viol += len(info["violations"])
            obs = nobs
        return dict(reward=total_reward, energy_J=state.total_energy,
                    latency_s=float(state.task_latency.sum()) / scn.tasks_per_user,
                    violations=n_viol, feasible=int(not state.violations))

    def _set_lr(self) -> None:
        n = self.cfg.lr_decay_episodes
        if n <= 0:
            return
        frac = min(self.episode / n, 1.0)
        lr = self.cfg.lr * (1.0 - frac * (1.0 - self.cfg.lr_final_frac))
        for g in self.opt.param_groups:
            g["lr"] = lr

    def run_episode(self) -> dict:
        self._set_lr()
        row = dict(episode=self.episode, **self.collect_episode())
        updated = False
        if len(self.replay) >= self.cfg.warmup_transitions:
            for _ in range(self.cfg.updates_per_episode):
                self.update()
                updated = True
        if updated:
            self._updates_since_combine += 1
            if not self.cfg.use_mpo or self._updates_since_combine >= self.cfg.mpo_every:
                self.combine()
                self._updates_since_combine = 0
        row.update({k: self.last_losses.get(k, math.nan) for k in
                    ("loss_v_disc", "loss_q_disc", "loss_pi_disc",
                     "loss_v_cont", "loss_q_cont", "loss_pi_cont")})
        rep = self.last_mpo
        row.update(mpo_eta=rep.eta if rep else math.nan,
                   mpo_kl_disc=rep.kl_discrete if rep else math.nan,
                   mpo_kl_cont=rep.kl_continuous if rep else math.nan)
        ev = self.cfg.eval_every
        if ev and (self.episode + 1) % ev == 0:
            res = evaluate_bundle(self.scn, self.bundle, self.scn.seed)
            row.update(eval_energy_J=res["energy_J"] if res["feasible"] else math.inf,
                       eval_latency_s=res["latency_s"] if res["feasible"] else math.inf,
                       eval_feasible=int(res["feasible"]))
        else:
            row.update(eval_energy_J=math.nan, eval_latency_s=math.nan, eval_feasible=-1)
        self.episode += 1
        return row


def train(scn: Scenario, cfg: TrainConfig, episodes: int, max_seconds: float | None = None,
          stop_when=None, callback=None) -> TrainResult:
    """Run up to ``episodes`` episodes (or until ``max_seconds`` / ``stop_when(row)``)."""
    torch.set_num_threads(1)
    trainer = Trainer(scn, cfg)
    start = time.perf_counter()
    rows = []
    for _ in range(int(episodes)):
        row = trainer.run_episode()
        rows.append(row)
        if callback is not None:
            callback(row)
        if stop_when is not None and stop_when(row):
            break
        if max_seconds is not None and time.perf_counter() - start > max_seconds:
            break
    return TrainResult(trainer.bundle, trainer.opt, rows, trainer.episode,
                       time.perf_counter() - start)


def write_metrics_csv(rows: list[dict], path: str | Path, extra: dict | None = None) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    extra = extra or {}
    fields = list(extra) + list(METRICS_FIELDS)
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, extrasaction="ignore")
        w.writeheader()
        for r in rows:
            w.writerow({**extra, **{k: (repr(v) if isinstance(v, float) else v)
                                     for k, v in r.items()}})
