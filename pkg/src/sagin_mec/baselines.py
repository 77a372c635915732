"""Non-learned reference policies.  Each returns an :class:`~sagin_mec.environment.HybridAction`."""

from __future__ import annotations

import numpy as np

from . import environment as env
from .metrics import OffloadFractions, ResourceAlloc, TailTarget, task_metrics
from .oracle import GridSpec, candidate_table
from .scenario import Scenario


def _first_available(mask: np.ndarray, head_arms: list[int]) -> np.ndarray:
    arms = np.zeros(len(head_arms), dtype=np.int64)
    for h, n in enumerate(head_arms):
        ok = np.flatnonzero(mask[h, :n])
        arms[h] = ok[0] if len(ok) else 0
    return arms


def random_policy(scn: Scenario, state: env.EpisodeState, mask: env.ActionMask,
                  rng: np.random.Generator) -> env.HybridAction:
    """Uniform over available arms (all arms if a head has none) and over the continuous box."""
    arms = np.zeros(scn.n_heads, dtype=np.int64)
    for h, n in enumerate(scn.head_arms):
        ok = np.flatnonzero(mask.discrete[h, :n])
        if len(ok) == 0:
            ok = np.arange(n)
        arms[h] = ok[rng.integers(len(ok))]
    cont = rng.uniform(-1.0, 1.0, size=scn.continuous_dim)
    return env.HybridAction(arms, cont)


def local_only_policy(scn: Scenario, state: env.EpisodeState,
                      mask: env.ActionMask | None = None) -> env.HybridAction:
    mask = env.action_mask(scn, state) if mask is None else mask
    arms = _first_available(mask.discrete, scn.head_arms)
    cont = np.full(scn.continuous_dim, -1.0)
    for k in range(scn.n_tasks):
        cont[6 * k] = 1.0
    cont[6 * scn.n_tasks:] = 0.0
    return env.HybridAction(arms, cont)


GREEDY_GRID = GridSpec(mu_step=0.5, alloc_levels=(0.25, 0.5, 1.0))


def greedy_plan(scn: Scenario, state: env.EpisodeState, grid: GridSpec = GREEDY_GRID) -> env.OffloadPlan:
    """Assign ready tasks one at a time to the cheapest feasible (route, grid plan).

    A user's route is fixed by its first task of the round; a UAV's satellite
    and a satellite's tail are fixed by the first user that needs them.  The
    per-task budget is the user's remaining budget split evenly over its
    remaining tasks; node capacity is tracked across the round.
    """
    mask = env.action_mask(scn, state).discrete
    win_sat, win_cloud = env.remaining_windows(state.instance, state.elapsed_s)
    table = candidate_table(grid)
    arms = _first_available(mask, scn.head_arms)
    user_uav = [None] * scn.n_users
    uav_sat = [None] * scn.n_uavs
    sat_tail = [None] * scn.n_sats
    used: dict[tuple[str, int], float] = {}
    tasks = {}
    energy_goal = scn.objective == "energy"
    gains = env.user_uav_gains(scn, state.instance, state.uav_xyz)
    left = (~state.completed).sum(axis=1)
    planned = np.zeros(scn.n_users)    # budget committed earlier in this round

    def tail_ok(l, arm):
        kind, node = env.tail_target(scn, l, arm)
        return win_sat[node] > 0 if kind is TailTarget.ISL_SATELLITE else win_cloud[l, node] > 0

    for m, i in env.ready_list(scn, state):
        task = state.instance.graphs[m].task(i)
        spent = state.user_latency[m] if energy_goal else state.user_energy[m]
        limit = scn.t_max_s if energy_goal else scn.e_max_J
        budget = (limit - spent - planned[m]) / max(int(left[m]), 1)
        options = []
        uavs = [user_uav[m]] if user_uav[m] is not None else range(scn.n_uavs)
        for n in uavs:
            sats = [uav_sat[n]] if uav_sat[n] is not None else [l for l in range(scn.n_sats) if win_sat[l] > 0]
            for l in sats:
                tails = [sat_tail[l]] if sat_tail[l] is not None else \
                    [a for a in range(scn.n_sats - 1 + scn.n_clouds) if tail_ok(l, a)]
                for a in tails:
                    options.append((n, l, a))
        best = None
        for n, l, a in options:
            kind, node = env.tail_target(scn, l, a)
            nodes = (("uav", n), ("sat", l), ("sat", node) if kind is TailTarget.ISL_SATELLITE else ("cloud", node))
            caps = (scn.compute.f_uav_max_Hz, scn.compute.f_sat_max_Hz, env.tail_cap(scn, kind))
            pairing = env.Pairing(tuple(n if u == m else 0 for u in range(scn.n_users)),
                                  tuple(l if v == n else 0 for v in range(scn.n_uavs)),
                                  tuple(a if s == l else 0 for s in range(scn.n_sats)))
            rates, _ = env.route_rates(scn, state, pairing, m, gains=gains)
            for c in range(len(table)):
                f = table.level[c] * np.array(caps)
                if any(f[j] > 0 and used.get(nodes[j], 0.0) + f[j] > env.node_capacity(scn, nodes[j]) * (1 + 1e-9)
                       for j in range(3)):
                    continue
                tm = task_metrics(task, OffloadFractions(*table.mu[c]), ResourceAlloc(*f), rates,
                                  scn.compute, kind, scn.rf)
                obj, cons = (tm.total_energy, tm.total_latency) if energy_goal else (tm.total_latency, tm.total_energy)
                ok = cons <= budget
                key = (not ok, obj if ok else cons)
                if best is None or key < best[0]:
                    best = (key, n, l, a, c, f, nodes, cons)
        _, n, l, a, c, f, nodes, cons = best
        planned[m] += cons
        user_uav[m], uav_sat[n], sat_tail[l] = n, l, a
        for j in range(3):
            if f[j] > 0:
                used[nodes[j]] = used.get(nodes[j], 0.0) + f[j]
        tasks[(m, i)] = env.TaskPlan(OffloadFractions(*map(float, table.mu[c])), ResourceAlloc(*map(float, f)))
        left[m] -= 1

    head = list(arms)
    for m, n in enumerate(user_uav):
        if n is not None:
            head[m] = n
    for n, l in enumerate(uav_sat):
        if l is not None:
            head[scn.n_users + n] = l
    for l, a in enumerate(sat_tail):
        if a is not None:
            head[scn.n_users + scn.n_uavs + l] = a
    pairing = env.Pairing.from_discrete(scn, head)
    return env.OffloadPlan(pairing, tasks, state.uav_xyz.copy())


def greedy_policy(scn: Scenario, state: env.EpisodeState, grid: GridSpec = GREEDY_GRID) -> env.HybridAction:
    return env.encode_plan(scn, state, greedy_plan(scn, state, grid))


def run_policy(scn: Scenario, name: str, seed: int | None = None, rng_seed: int = 0) -> dict:
    """Roll out one named baseline for a full episode."""
    rng = np.random.default_rng(rng_seed)
    policies = {
        "random": lambda st, m: random_policy(scn, st, m, rng),
        "local_only": lambda st, m: local_only_policy(scn, st, m),
        "greedy": lambda st, m: greedy_policy(scn, st),
    }
    if name not in policies:
        raise ValueError(f"unknown policy {name!r}; choose from {sorted(policies)}")
    pol = policies[name]
    state = env.reset(scn, seed)
    rows = []
    done = False
    while not done:
        mask = env.action_mask(scn, state)
        action = pol(state, mask)
        state, reward, done, info = env.step(scn, state, action)
        rows.append(dict(time_s=state.elapsed_s, reward=reward, energy_J=state.total_energy,
                         latency_s=state.total_latency,
                         violations=";".join(v.constraint for v in info["violations"])))
    return dict(state=state, trace=rows, feasible=not state.violations,
                energy_J=state.total_energy,
                latency_s=float(state.task_latency.sum()) / scn.tasks_per_user)
