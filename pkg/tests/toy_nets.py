"""Small double-precision agents and a finite-difference checker shared by the learner tests."""

import torch

from sagin_mec.hybrid_sac.networks import ContinuousAgent, DiscreteAgent, MlpSpec

OBS_DIM, HEAD_ARMS, ACT_DIM, BATCH = 4, [2, 3], 2, 6
SPEC = MlpSpec((8,), "tanh")


def toy_agents(seed: int):
    torch.manual_seed(seed)
    disc = DiscreteAgent(OBS_DIM, HEAD_ARMS, SPEC).double()
    cont = ContinuousAgent(OBS_DIM, ACT_DIM, SPEC).double()
    # perturb targets so the bootstrap term is not a copy of the value net
    with torch.no_grad():
        for p in list(disc.target_value.parameters()) + list(cont.target_value.parameters()):
            p.add_(0.1 * torch.randn_like(p))
    g = torch.Generator().manual_seed(1000 + seed)
    batch = dict(
        obs=torch.randn(BATCH, OBS_DIM, generator=g, dtype=torch.float64),
        next_obs=torch.randn(BATCH, OBS_DIM, generator=g, dtype=torch.float64),
        arms=torch.stack([torch.randint(0, n, (BATCH,), generator=g) for n in HEAD_ARMS], -1),
        act=torch.rand(BATCH, ACT_DIM, generator=g, dtype=torch.float64) * 1.8 - 0.9,
        reward=torch.rand(BATCH, generator=g, dtype=torch.float64),
        done=(torch.rand(BATCH, generator=g) < 0.3).double(),
        noise=torch.randn(BATCH, ACT_DIM, generator=g, dtype=torch.float64),
    )
    batch["arms"][0, 1] = -1
    return disc, cont, batch


def grad_check(loss_fn, params, eps: float = 1e-6) -> float:
    """Relative error between autograd and central differences over ``params``."""
    for p in params:
        p.grad = None
    loss_fn().backward()
    analytic = torch.cat([p.grad.reshape(-1) for p in params])
    numeric = []
    with torch.no_grad():
        for p in params:
            flat = p.view(-1)
            for i in range(flat.numel()):
                orig = flat[i].item()
                flat[i] = orig + eps
                up = loss_fn().item()
                flat[i] = orig - eps
                down = loss_fn().item()
                flat[i] = orig
                numeric.append((up - down) / (2 * eps))
    numeric = torch.tensor(numeric, dtype=torch.float64)
    return float((analytic - numeric).norm() / numeric.norm().clamp(min=1e-12))


def loss_cases(disc, cont, b, alpha=0.3, gamma=0.9):
    """(name, loss closure, parameters it trains) for all six losses."""
    from sagin_mec.hybrid_sac import losses as L

    def pi_cont():
        cont.q.requires_grad_(False)
        try:
            return L.continuous_policy_loss(cont, b["obs"], alpha, b["noise"])
        finally:
            cont.q.requires_grad_(True)

    return [
        ("value_disc", lambda: L.discrete_value_loss(disc, b["obs"], alpha), list(disc.value.parameters())),
        ("soft_q_disc", lambda: L.discrete_soft_q_loss(disc, b["obs"], b["arms"], b["reward"],
                                                        b["next_obs"], b["done"], gamma),
         list(disc.q.parameters())),
        ("policy_disc", lambda: L.discrete_policy_loss(disc, b["obs"], alpha), list(disc.policy.parameters())),
        ("value_cont", lambda: L.continuous_value_loss(cont, b["obs"], alpha, b["noise"]),
         list(cont.value.parameters())),
        ("soft_q_cont", lambda: L.continuous_soft_q_loss(cont, b["obs"], b["act"], b["reward"],
                                                         b["next_obs"], b["done"], gamma),
         list(cont.q.parameters())),
        ("policy_cont", pi_cont, list(cont.policy.parameters())),
    ]
