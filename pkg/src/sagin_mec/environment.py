"""Episode dynamics of the space-air-ground offloading MDP.

One decision step is one scheduling round: every task whose parents are done
receives a plan, all of them run concurrently, and the clock advances by the
slowest task of the round.  UAVs move once per step, before the round's rates
are evaluated.  Small-scale fading is drawn at reset and held for the episode
(block fading); link gains still follow the UAVs as they move.

The functional core (:func:`reset`, :func:`step`) never mutates its inputs;
:class:`SaginEnv` is a thin stateful wrapper for rollout loops.
"""

from __future__ import annotations

import copy
import dataclasses
import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from . import channel, geometry
from .metrics import (LinkRates, OffloadFractions, ResourceAlloc, TailTarget,
                      TaskMetrics, task_metrics)
from .scenario import Scenario
from .taskgraph import TaskGraph, generate_dag, ready_tasks

REWARD_CAP = 1e6
_TOL = 1e-9


# --------------------------------------------------------------------------
# data types
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Instance:
    """Everything drawn at reset that stays fixed during the episode."""

    positions: geometry.NodePositions
    graphs: tuple[TaskGraph, ...]
    uu_phase: np.ndarray      # (M, N) LoS phase user->UAV
    uu_nlos: np.ndarray       # (M, N) unit complex Gaussian
    dist_uav_sat: np.ndarray  # (L,)
    dist_isl: np.ndarray      # (L, L)
    dist_sat_cloud: np.ndarray  # (L, K)
    rate_uav_sat: np.ndarray  # (N, L)
    rate_isl: np.ndarray      # (L, L)
    rate_sat_cloud: np.ndarray  # (L, K)
    window_end_sat: np.ndarray    # (L,) absolute time the satellite leaves coverage
    window_end_cloud: np.ndarray  # (L, K)


@dataclass(frozen=True)
class Pairing:
    user_uav: tuple[int, ...]
    uav_sat: tuple[int, ...]
    sat_tail: tuple[int, ...]

    @classmethod
    def from_discrete(cls, scn: Scenario, arms) -> "Pairing":
        arms = [int(a) for a in arms]
        m, n = scn.n_users, scn.n_uavs
        return cls(tuple(arms[:m]), tuple(arms[m:m + n]), tuple(arms[m + n:]))

    def to_discrete(self) -> np.ndarray:
        return np.array(self.user_uav + self.uav_sat + self.sat_tail, dtype=np.int64)


def tail_target(scn: Scenario, sat: int, arm: int) -> tuple[TailTarget, int]:
    """Decode a tail arm of satellite ``sat`` into (kind, node index)."""
    n_isl = scn.n_sats - 1
    if arm < n_isl:
        others = [j for j in range(scn.n_sats) if j != sat]
        return TailTarget.ISL_SATELLITE, others[arm]
    return TailTarget.CLOUD, arm - n_isl


def tail_arm(scn: Scenario, sat: int, kind: TailTarget, node: int) -> int:
    if kind is TailTarget.CLOUD:
        return scn.n_sats - 1 + node
    return node if node < sat else node - 1


@dataclass(frozen=True)
class TaskPlan:
    fractions: OffloadFractions
    alloc: ResourceAlloc


@dataclass
class OffloadPlan:
    """Pairings, fractions and allocations for one scheduling round."""

    pairing: Pairing
    tasks: dict[tuple[int, int], TaskPlan]
    uav_xyz: np.ndarray


@dataclass(frozen=True)
class HybridAction:
    discrete: np.ndarray     # (n_heads,) arm per head
    continuous: np.ndarray   # (continuous_dim,) in [-1, 1]


@dataclass(frozen=True)
class ActionMask:
    discrete: np.ndarray     # (n_heads, max_arms) True = available
    low: np.ndarray          # native-unit lower bounds per continuous dim
    high: np.ndarray


@dataclass(frozen=True)
class Transition:
    state: np.ndarray
    action: HybridAction
    reward: float
    next_state: np.ndarray
    done: bool
    mask: np.ndarray


@dataclass(frozen=True)
class Violation:
    constraint: str
    magnitude: float
    detail: str = ""


@dataclass
class EpisodeState:
    instance: Instance
    uav_xyz: np.ndarray
    elapsed_s: float
    completed: np.ndarray      # (M, I) bool
    remaining: np.ndarray      # (M, I, 4) fraction left per tier (user, UAV, sat, tail)
    cycles_done: np.ndarray    # (M, I, 4)
    task_latency: np.ndarray   # (M, I)
    task_energy: np.ndarray    # (M, I)
    user_latency: np.ndarray   # (M,)
    user_energy: np.ndarray    # (M,)
    uav_flight_s: np.ndarray   # (N,)
    step_index: int = 0
    done: bool = False
    violations: tuple[Violation, ...] = ()

    @property
    def total_energy(self) -> float:
        return float(self.user_energy.sum())

    @property
    def total_latency(self) -> float:
        return float(self.user_latency.sum())

    def copy(self) -> "EpisodeState":
        return EpisodeState(
            instance=self.instance,
            uav_xyz=self.uav_xyz.copy(),
            elapsed_s=self.elapsed_s,
            completed=self.completed.copy(),
            remaining=self.remaining.copy(),
            cycles_done=self.cycles_done.copy(),
            task_latency=self.task_latency.copy(),
            task_energy=self.task_energy.copy(),
            user_latency=self.user_latency.copy(),
            user_energy=self.user_energy.copy(),
            uav_flight_s=self.uav_flight_s.copy(),
            step_index=self.step_index,
            done=self.done,
            violations=self.violations,
        )


def state_digest(state: EpisodeState) -> str:
    h = hashlib.sha256()
    for arr in (state.uav_xyz, state.completed, state.remaining, state.cycles_done,
                state.task_latency, state.task_energy, state.user_latency,
                state.user_energy, state.uav_flight_s):
        h.update(np.ascontiguousarray(arr).tobytes())
    h.update(np.float64(state.elapsed_s).tobytes())
    h.update(repr((state.step_index, state.done, state.violations)).encode())
    return h.hexdigest()


# --------------------------------------------------------------------------
# reset and channel state
# --------------------------------------------------------------------------

def _unit_cgauss(rng: np.random.Generator, shape) -> np.ndarray:
    z = rng.standard_normal(shape + (2,))
    return (z[..., 0] + 1j * z[..., 1]) / math.sqrt(2.0)


def reset(scn: Scenario, seed: int | None = None) -> EpisodeState:
    seed = scn.seed if seed is None else seed
    rng = np.random.default_rng(seed)
    M, N, L, K, I = scn.n_users, scn.n_uavs, scn.n_sats, scn.n_clouds, scn.tasks_per_user
    geo, rf, box = scn.geo, scn.rf, scn.flight_box

    user_xy = rng.uniform(0.0, scn.user_area_m, size=(M, 2))
    uav_xy = rng.uniform([box.x_min, box.y_min], [box.x_max, box.y_max], size=(N, 2))
    uav_z = np.full((N, 1), min(max(scn.uav_init_height_m, box.z_min), box.z_max))
    uav_xyz = np.hstack([uav_xy, uav_z])
    if scn.leo_offsets_m is not None:
        sat_off = np.asarray(scn.leo_offsets_m, dtype=float)
    else:
        sat_off = rng.uniform(*scn.leo_offset_range_m, size=L)
    cloud_off = rng.uniform(*scn.cloud_offset_range_m, size=K)
    positions = geometry.NodePositions(user_xy, uav_xyz, sat_off, cloud_off)

    graphs = tuple(generate_dag(I, scn.task_size_range_bits, scn.task_cycles, scn.edge_prob,
                                rng, owner_user=m) for m in range(M))

    uu_phase = rng.uniform(0.0, 2 * math.pi, size=(M, N))
    uu_nlos = _unit_cgauss(rng, (M, N))
    us_phase = rng.uniform(0.0, 2 * math.pi, size=(N, L))
    us_innov = _unit_cgauss(rng, (N, L))
    sc_phase = rng.uniform(0.0, 2 * math.pi, size=(L, K))
    sc_nlos = _unit_cgauss(rng, (L, K))

    d_us = np.array([geometry.uav_sat_distance(o, geo) for o in sat_off])
    d_isl = np.array([[geometry.isl_distance(a, b, geo) for b in sat_off] for a in sat_off])
    d_sc = np.array([[geometry.sat_cloud_distance(o, c, geo) for c in cloud_off]
                     for o in sat_off])

    h_us = np.empty((N, L), dtype=complex)
    for n in range(N):
        for l in range(L):
            h_us[n, l] = channel.sat_gain_from_fading(
                d_us[l], d_us[l] / geo.light_speed_mps, rf, us_phase[n, l], us_innov[n, l])
    rate_us = np.array([[channel.uplink_rate_uav_sat(n, h_us[:, l], rf) for l in range(L)]
                        for n in range(N)])
    rate_isl = np.array([[channel.isl_rate(d_isl[i, j], rf) if i != j else 0.0
                          for j in range(L)] for i in range(L)])
    rate_sc = np.empty((L, K))
    for l in range(L):
        for k in range(K):
            h = channel.rician_from_fading(d_sc[l, k], sc_phase[l, k], sc_nlos[l, k],
                                           rf.sat_cloud_rician_factor, rf.pathloss_los,
                                           rf.pathloss_nlos)
            rate_sc[l, k] = channel.sat_cloud_rate(h, rf)

    t_cov = geometry.coverage_time(geo)
    win_sat = np.maximum(0.0, t_cov - sat_off / geo.orbital_speed_mps)
    win_cloud = np.maximum(0.0, t_cov - (sat_off[:, None] + cloud_off[None, :])
                           / geo.orbital_speed_mps)

    inst = Instance(positions, graphs, uu_phase, uu_nlos, d_us, d_isl, d_sc,
                    rate_us, rate_isl, rate_sc, win_sat, win_cloud)
    return EpisodeState(
        instance=inst,
        uav_xyz=uav_xyz.copy(),
        elapsed_s=0.0,
        completed=np.zeros((M, I), dtype=bool),
        remaining=np.ones((M, I, 4)),
        cycles_done=np.zeros((M, I, 4)),
        task_latency=np.zeros((M, I)),
        task_energy=np.zeros((M, I)),
        user_latency=np.zeros(M),
        user_energy=np.zeros(M),
        uav_flight_s=np.zeros(N),
    )


def user_uav_gains(scn: Scenario, inst: Instance, uav_xyz: np.ndarray) -> np.ndarray:
    """(M, N) complex gains for the current UAV positions."""
    rf = scn.rf
    user_xyz = np.hstack([inst.positions.user_xy_m, np.zeros((scn.n_users, 1))])
    d = np.linalg.norm(user_xyz[:, None, :] - uav_xyz[None, :, :], axis=-1)
    k = rf.rician_factor
    los = np.exp(1j * inst.uu_phase) * d ** (-rf.pathloss_los / 2)
    nlos = inst.uu_nlos * d ** (-rf.pathloss_nlos / 2)
    return math.sqrt(k / (k + 1)) * los + math.sqrt(1 / (k + 1)) * nlos


def remaining_windows(inst: Instance, elapsed_s: float) -> tuple[np.ndarray, np.ndarray]:
    return (np.maximum(0.0, inst.window_end_sat - elapsed_s),
            np.maximum(0.0, inst.window_end_cloud - elapsed_s))


def ready_mask(scn: Scenario, state: EpisodeState) -> np.ndarray:
    out = np.zeros((scn.n_users, scn.tasks_per_user), dtype=bool)
    for m, g in enumerate(state.instance.graphs):
        done_ids = [i for i in range(scn.tasks_per_user) if state.completed[m, i]]
        for i in ready_tasks(g, done_ids):
            out[m, i] = True
    return out


def ready_list(scn: Scenario, state: EpisodeState) -> list[tuple[int, int]]:
    return [(int(m), int(i)) for m, i in np.argwhere(ready_mask(scn, state))]


# --------------------------------------------------------------------------
# observations and masks
# --------------------------------------------------------------------------

def observation_dim(scn: Scenario) -> int:
    M, N, L, K, I = scn.n_users, scn.n_uavs, scn.n_sats, scn.n_clouds, scn.tasks_per_user
    return M * N + L + L * K + M * I * 4 + M * I * 2 + 2 * M + 3 * N + 1


def observe(scn: Scenario, state: EpisodeState) -> np.ndarray:
    """Flat state vector: channels, service windows, remaining fractions, plus bookkeeping."""
    inst = state.instance
    t_cov = geometry.coverage_time(scn.geo)
    gains = np.abs(user_uav_gains(scn, inst, state.uav_xyz)) ** 2
    gain_db = (10.0 * np.log10(gains) + 40.0) / 10.0
    win_sat, win_cloud = remaining_windows(inst, state.elapsed_s)
    box = scn.flight_box
    lo, hi = np.array(box.low), np.array(box.high)
    span = np.where(hi > lo, hi - lo, 1.0)
    sizes = np.array([[t.data_size_bits for t in g.tasks] for g in inst.graphs])
    parts = [
        gain_db.ravel(),
        win_sat / t_cov,
        win_cloud.ravel() / t_cov,
        state.remaining.ravel(),
        ready_mask(scn, state).ravel().astype(float),
        sizes.ravel() / scn.task_size_range_bits[1],
        state.user_latency / scn.t_max_s,
        state.user_energy / scn.e_max_J,
        ((state.uav_xyz - lo) / span).ravel(),
        np.array([state.elapsed_s / t_cov]),
    ]
    return np.concatenate(parts).astype(np.float32)


def discrete_mask(scn: Scenario, state: EpisodeState) -> np.ndarray:
    """Availability of every (head, arm); padding arms are never available."""
    mask = np.zeros((scn.n_heads, scn.max_arms), dtype=bool)
    win_sat, win_cloud = remaining_windows(state.instance, state.elapsed_s)
    h = 0
    for _ in range(scn.n_users):
        mask[h, :scn.n_uavs] = True
        h += 1
    for _ in range(scn.n_uavs):
        mask[h, :scn.n_sats] = win_sat > 0
        h += 1
    for l in range(scn.n_sats):
        for arm in range(scn.n_sats - 1 + scn.n_clouds):
            kind, node = tail_target(scn, l, arm)
            ok = win_sat[node] > 0 if kind is TailTarget.ISL_SATELLITE else win_cloud[l, node] > 0
            mask[h, arm] = ok
        h += 1
    return mask


def action_mask(scn: Scenario, state: EpisodeState) -> ActionMask:
    D = scn.continuous_dim
    low = np.zeros(D)
    high = np.zeros(D)
    c = scn.compute
    caps = (c.f_uav_max_Hz, c.f_sat_max_Hz, max(c.f_sat_max_Hz, c.f_cloud_max_Hz))
    ready = ready_mask(scn, state)
    for m in range(scn.n_users):
        for i in range(scn.tasks_per_user):
            k = 6 * (m * scn.tasks_per_user + i)
            if ready[m, i]:
                high[k:k + 3] = 1.0
                for j, tier in enumerate((1, 2, 3)):
                    if state.remaining[m, i, tier] > 0:
                        low[k + 3 + j] = scn.min_alloc_frac * caps[j]
                        high[k + 3 + j] = caps[j]
            else:
                low[k:k + 3] = 1.0
                high[k:k + 3] = 1.0
    off = 6 * scn.n_tasks
    low[off:] = -scn.uav_max_step_m
    high[off:] = scn.uav_max_step_m
    return ActionMask(discrete_mask(scn, state), low, high)


# --------------------------------------------------------------------------
# action decoding
# --------------------------------------------------------------------------

def _alloc_from_unit(u: float, cap: float, lo_frac: float) -> float:
    return cap * (lo_frac + (1.0 - lo_frac) * 0.5 * (u + 1.0))


def _unit_from_alloc(f: float, cap: float, lo_frac: float) -> float:
    if f <= 0:
        return -1.0
    return float(np.clip(2.0 * (f / cap - lo_frac) / (1.0 - lo_frac) - 1.0, -1.0, 1.0))


def tail_cap(scn: Scenario, kind: TailTarget) -> float:
    if kind is TailTarget.CLOUD:
        return scn.compute.f_cloud_max_Hz
    return scn.compute.f_sat_max_Hz


def check_action(scn: Scenario, action: HybridAction) -> None:
    d = np.asarray(action.discrete)
    c = np.asarray(action.continuous, dtype=float)
    if d.shape != (scn.n_heads,):
        raise ValueError(f"discrete action must have shape ({scn.n_heads},), got {d.shape}")
    if c.shape != (scn.continuous_dim,):
        raise ValueError(f"continuous action must have shape ({scn.continuous_dim},), got {c.shape}")
    if not np.all(np.isfinite(c)):
        raise ValueError("continuous action contains NaN or inf")
    for h, (arm, n_arms) in enumerate(zip(d, scn.head_arms)):
        if not 0 <= int(arm) < n_arms:
            raise ValueError(f"head {h} arm {arm} outside [0, {n_arms})")


def move_uavs(scn: Scenario, uav_xyz: np.ndarray, displacement: np.ndarray) -> np.ndarray:
    disp = np.asarray(displacement, dtype=float).reshape(scn.n_uavs, 3).copy()
    cap = scn.uav_max_step_m
    norms = np.linalg.norm(disp, axis=1)
    over = norms > cap
    disp[over] *= (cap / norms[over])[:, None]
    box = scn.flight_box
    return np.clip(uav_xyz + disp, box.low, box.high)


def decode_action(scn: Scenario, state: EpisodeState,
                  action: HybridAction) -> tuple[OffloadPlan, list[str]]:
    """Map a normalized hybrid action onto a round plan.

    Returns the plan and the list of nodes whose allocations were scaled back
    to capacity.
    """
    check_action(scn, action)
    cont = np.clip(np.asarray(action.continuous, dtype=float), -1.0, 1.0)
    pairing = Pairing.from_discrete(scn, action.discrete)
    off = 6 * scn.n_tasks
    uav_xyz = move_uavs(scn, state.uav_xyz, cont[off:] * scn.uav_max_step_m)

    comp, lo = scn.compute, scn.min_alloc_frac
    tasks = {}
    for m, i in ready_list(scn, state):
        k = 6 * (m * scn.tasks_per_user + i)
        a = cont[k:k + 6]
        mu = np.clip(0.5 * (a[:3] + 1.0), 0.0, 1.0)
        fr = OffloadFractions(*map(float, mu))
        n = pairing.user_uav[m]
        l = pairing.uav_sat[n]
        kind, _ = tail_target(scn, l, pairing.sat_tail[l])
        tasks[(m, i)] = TaskPlan(fr, ResourceAlloc(
            _alloc_from_unit(a[3], comp.f_uav_max_Hz, lo),
            _alloc_from_unit(a[4], comp.f_sat_max_Hz, lo),
            _alloc_from_unit(a[5], tail_cap(scn, kind), lo)))
    plan = OffloadPlan(pairing, tasks, uav_xyz)
    plan = canonicalize(scn, plan)
    return normalize_allocations(scn, plan)


def canonicalize(scn: Scenario, plan: OffloadPlan) -> OffloadPlan:
    """Zero every allocation whose compute share is zero."""
    tasks = {}
    for key, tp in plan.tasks.items():
        _, s_n, s_l, s_t = tp.fractions.shares()
        a = tp.alloc
        tasks[key] = TaskPlan(tp.fractions, ResourceAlloc(
            a.f_uav_Hz if s_n > 0 else 0.0,
            a.f_sat_Hz if s_l > 0 else 0.0,
            a.f_tail_Hz if s_t > 0 else 0.0))
    return OffloadPlan(plan.pairing, tasks, plan.uav_xyz)


def node_loads(scn: Scenario, plan: OffloadPlan) -> dict[tuple[str, int], list[tuple[tuple[int, int], str]]]:
    """Which (task, allocation field) entries land on each compute node."""
    loads: dict = {}
    for (m, i), tp in plan.tasks.items():
        n = plan.pairing.user_uav[m]
        l = plan.pairing.uav_sat[n]
        kind, node = tail_target(scn, l, plan.pairing.sat_tail[l])
        if tp.alloc.f_uav_Hz > 0:
            loads.setdefault(("uav", n), []).append(((m, i), "f_uav_Hz"))
        if tp.alloc.f_sat_Hz > 0:
            loads.setdefault(("sat", l), []).append(((m, i), "f_sat_Hz"))
        if tp.alloc.f_tail_Hz > 0:
            key = ("sat", node) if kind is TailTarget.ISL_SATELLITE else ("cloud", node)
            loads.setdefault(key, []).append(((m, i), "f_tail_Hz"))
    return loads


def node_capacity(scn: Scenario, node: tuple[str, int]) -> float:
    c = scn.compute
    return {"uav": c.f_uav_max_Hz, "sat": c.f_sat_max_Hz, "cloud": c.f_cloud_max_Hz}[node[0]]


def normalize_allocations(scn: Scenario, plan: OffloadPlan) -> tuple[OffloadPlan, list[str]]:
    tasks = dict(plan.tasks)
    flagged = []
    for node, entries in node_loads(scn, plan).items():
        cap = node_capacity(scn, node)
        total = sum(getattr(tasks[key].alloc, fld) for key, fld in entries)
        if total > cap:
            scale = cap / total
            flagged.append(f"{node[0]}{node[1]}")
            for key, fld in entries:
                tp = tasks[key]
                alloc = dataclasses.replace(tp.alloc, **{fld: getattr(tp.alloc, fld) * scale})
                tasks[key] = TaskPlan(tp.fractions, alloc)
    return OffloadPlan(plan.pairing, tasks, plan.uav_xyz), flagged


def encode_plan(scn: Scenario, state: EpisodeState, plan: OffloadPlan) -> HybridAction:
    """Inverse of :func:`decode_action` up to clipping and float rounding."""
    cont = np.zeros(scn.continuous_dim)
    comp, lo = scn.compute, scn.min_alloc_frac
    for (m, i), tp in plan.tasks.items():
        k = 6 * (m * scn.tasks_per_user + i)
        fr, al = tp.fractions, tp.alloc
        l = plan.pairing.uav_sat[plan.pairing.user_uav[m]]
        kind, _ = tail_target(scn, l, plan.pairing.sat_tail[l])
        cont[k:k + 3] = 2.0 * np.array([fr.mu_user, fr.mu_uav, fr.mu_sat]) - 1.0
        cont[k + 3] = _unit_from_alloc(al.f_uav_Hz, comp.f_uav_max_Hz, lo)
        cont[k + 4] = _unit_from_alloc(al.f_sat_Hz, comp.f_sat_max_Hz, lo)
        cont[k + 5] = _unit_from_alloc(al.f_tail_Hz, tail_cap(scn, kind), lo)
    off = 6 * scn.n_tasks
    if scn.uav_max_step_m > 0:
        disp = (np.asarray(plan.uav_xyz) - state.uav_xyz).ravel() / scn.uav_max_step_m
        cont[off:] = np.clip(disp, -1.0, 1.0)
    return HybridAction(plan.pairing.to_discrete(), cont)


# --------------------------------------------------------------------------
# metrics, feasibility, step
# --------------------------------------------------------------------------

def route_rates(scn: Scenario, state: EpisodeState, pairing: Pairing, user: int,
                uav_xyz: np.ndarray | None = None,
                gains: np.ndarray | None = None) -> tuple[LinkRates, TailTarget]:
    inst = state.instance
    if gains is None:
        gains = user_uav_gains(scn, inst, state.uav_xyz if uav_xyz is None else uav_xyz)
    n = pairing.user_uav[user]
    l = pairing.uav_sat[n]
    kind, node = tail_target(scn, l, pairing.sat_tail[l])
    r_mn = channel.uplink_rate_user_uav(user, gains[:, n], scn.rf)
    if kind is TailTarget.ISL_SATELLITE:
        extra = dict(rate_isl=float(inst.rate_isl[l, node]), dist_isl_m=float(inst.dist_isl[l, node]))
    else:
        extra = dict(rate_sat_cloud=float(inst.rate_sat_cloud[l, node]),
                     dist_sat_cloud_m=float(inst.dist_sat_cloud[l, node]))
    rates = LinkRates(rate_user_uav=r_mn, rate_uav_sat=float(inst.rate_uav_sat[n, l]),
                      dist_uav_sat_m=float(inst.dist_uav_sat[l]), **extra)
    return rates, kind


def plan_metrics(scn: Scenario, state: EpisodeState,
                 plan: OffloadPlan) -> dict[tuple[int, int], TaskMetrics]:
    gains = user_uav_gains(scn, state.instance, plan.uav_xyz)
    out = {}
    for (m, i), tp in plan.tasks.items():
        rates, kind = route_rates(scn, state, plan.pairing, m, gains=gains)
        task = state.instance.graphs[m].task(i)
        out[(m, i)] = task_metrics(task, tp.fractions, tp.alloc, rates, scn.compute, kind, scn.rf)
    return out


def active_uavs(scn: Scenario, plan: OffloadPlan) -> set[int]:
    """UAVs that receive any part of a task this round."""
    return {plan.pairing.user_uav[m] for (m, _), tp in plan.tasks.items()
            if tp.fractions.mu_user < 1.0}


def traffic_route(scn: Scenario, plan: OffloadPlan) -> tuple[set[int], set[int]]:
    """Satellites reached by uplink traffic, and satellites forwarding to their tail."""
    sats, tails = set(), set()
    for (m, _), tp in plan.tasks.items():
        _, _, s_l, s_t = tp.fractions.shares()
        fr = tp.fractions
        l = plan.pairing.uav_sat[plan.pairing.user_uav[m]]
        if (1 - fr.mu_user) * (1 - fr.mu_uav) > 0:
            sats.add(l)
        if s_t > 0:
            tails.add(l)
    return sats, tails


def feasibility_check(scn: Scenario, state: EpisodeState, plan: OffloadPlan,
                      metrics: dict | None = None) -> list[Violation]:
    """Evaluate every constraint for one round plan; report, never raise."""
    out: list[Violation] = []
    p = plan.pairing
    if len(p.user_uav) != scn.n_users or any(not 0 <= a < scn.n_uavs for a in p.user_uav):
        out.append(Violation("32b", 1.0, "user-UAV pairing is not one-hot"))
    if len(p.uav_sat) != scn.n_uavs or any(not 0 <= a < scn.n_sats for a in p.uav_sat):
        out.append(Violation("32c", 1.0, "UAV-satellite pairing is not one-hot"))
    n_tail = scn.n_sats - 1 + scn.n_clouds
    if len(p.sat_tail) != scn.n_sats or any(not 0 <= a < n_tail for a in p.sat_tail):
        out.append(Violation("32d", 1.0, "satellite tail pairing is not one-hot"))
    if out:
        return out

    box = scn.flight_box
    xyz = np.asarray(plan.uav_xyz)
    excess = np.maximum(np.asarray(box.low) - xyz, 0) + np.maximum(xyz - np.asarray(box.high), 0)
    if np.any(excess > _TOL):
        out.append(Violation("32i", float(excess.max()), "UAV outside flight box"))

    letters = {"uav": "32e", "sat": "32f", "cloud": "32g"}
    for node, entries in node_loads(scn, plan).items():
        cap = node_capacity(scn, node)
        total = sum(getattr(plan.tasks[key].alloc, fld) for key, fld in entries)
        if total > cap * (1 + _TOL):
            out.append(Violation(letters[node[0]], total - cap, f"{node[0]} {node[1]} over capacity"))

    if metrics is None:
        metrics = plan_metrics(scn, state, plan)
    round_s = max((tm.total_latency for tm in metrics.values()), default=0.0)

    win_sat, win_cloud = remaining_windows(state.instance, state.elapsed_s)
    sat_users, tail_users = traffic_route(scn, plan)
    for l in sorted(sat_users):
        if win_sat[l] <= 0 or win_sat[l] < round_s:
            out.append(Violation("32a", round_s - win_sat[l] if win_sat[l] > 0 else max(round_s, 1.0),
                                 f"UAV traffic outlives coverage of satellite {l}"))
    for l in sorted(tail_users):
        kind, node = tail_target(scn, l, p.sat_tail[l])
        window = win_sat[node] if kind is TailTarget.ISL_SATELLITE else win_cloud[l, node]
        if window <= 0 or window < round_s:
            out.append(Violation("32a", round_s - window if window > 0 else max(round_s, 1.0),
                                 f"satellite {l} tail {kind.value} {node} out of coverage"))

    lat = state.user_latency.copy()
    en = state.user_energy.copy()
    for (m, _), tm in metrics.items():
        lat[m] += tm.total_latency
        en[m] += tm.total_energy
    if scn.objective == "energy":
        for m in range(scn.n_users):
            if lat[m] > scn.t_max_s * (1 + _TOL):
                out.append(Violation("32h", float(lat[m] - scn.t_max_s), f"user {m} latency"))
    else:
        for m in range(scn.n_users):
            if en[m] > scn.e_max_J * (1 + _TOL):
                out.append(Violation("33a", float(en[m] - scn.e_max_J), f"user {m} energy"))
    return out


def reward_energy(episode_energies_J) -> float:
    total = float(np.sum(episode_energies_J))
    if total <= 0:
        return REWARD_CAP
    return min(1.0 / total, REWARD_CAP)


def reward_latency(task_latencies_s) -> float:
    total = float(np.sum(task_latencies_s))
    if total <= 0:
        return REWARD_CAP
    if math.isinf(total):
        return 0.0
    return min(1.0 / total, REWARD_CAP)


def step_plan(scn: Scenario, state: EpisodeState, plan: OffloadPlan,
              renormalized: list[str] | None = None):
    """Execute one round plan; returns ``(next_state, reward, done, info)``."""
    if state.done:
        raise RuntimeError("episode already finished; call reset()")
    expected = set(ready_list(scn, state))
    if set(plan.tasks) != expected:
        raise ValueError(f"plan covers {sorted(plan.tasks)} but ready tasks are {sorted(expected)}")
    metrics = plan_metrics(scn, state, plan)
    violations = feasibility_check(scn, state, plan, metrics)
    round_s = max(tm.total_latency for tm in metrics.values())

    nxt = state.copy()
    nxt.uav_xyz = np.asarray(plan.uav_xyz, dtype=float).copy()
    for (m, i), tm in metrics.items():
        task = state.instance.graphs[m].task(i)
        shares = plan.tasks[(m, i)].fractions.shares()
        nxt.cycles_done[m, i] = np.array(shares) * task.cpu_cycles
        nxt.remaining[m, i] = 0.0
        nxt.completed[m, i] = True
        nxt.task_latency[m, i] = tm.total_latency
        nxt.task_energy[m, i] = tm.total_energy
        nxt.user_latency[m] += tm.total_latency
        nxt.user_energy[m] += tm.total_energy
    for n in active_uavs(scn, plan):
        nxt.uav_flight_s[n] += round_s
    nxt.elapsed_s = state.elapsed_s + round_s
    nxt.step_index = state.step_index + 1
    nxt.violations = state.violations + tuple(violations)
    all_done = bool(nxt.completed.all())
    nxt.done = all_done or bool(violations)

    step_energy = sum(tm.total_energy for tm in metrics.values())
    step_latency = sum(tm.total_latency for tm in metrics.values())
    if violations:
        reward = 0.0
    elif scn.reward_mode == "dense":
        reward = reward_energy([step_energy]) if scn.objective == "energy" else reward_latency([step_latency])
    elif all_done:
        if scn.objective == "energy":
            reward = reward_energy(nxt.task_energy.ravel())
        else:
            reward = reward_latency(nxt.task_latency.ravel())
    else:
        reward = 0.0
    info = dict(metrics=metrics, violations=violations, renormalized=list(renormalized or []),
                round_s=round_s, step_energy=step_energy, step_latency=step_latency,
                plan=plan, feasible_episode=all_done and not nxt.violations)
    return nxt, reward, nxt.done, info


def step(scn: Scenario, state: EpisodeState, action: HybridAction):
    plan, flagged = decode_action(scn, state, action)
    return step_plan(scn, state, plan, flagged)


def episode_objective(scn: Scenario, state: EpisodeState) -> float:
    """Total energy (J) or average latency per task index (s) accrued so far."""
    if scn.objective == "energy":
        return float(state.task_energy.sum())
    return float(state.task_latency.sum()) / scn.tasks_per_user


# --------------------------------------------------------------------------
# stateful wrapper
# --------------------------------------------------------------------------

@dataclass
class SaginEnv:
    scenario: Scenario
    state: EpisodeState | None = field(default=None, init=False)

    @property
    def obs_dim(self) -> int:
        return observation_dim(self.scenario)

    def reset(self, seed: int | None = None) -> np.ndarray:
        self.state = reset(self.scenario, seed)
        return observe(self.scenario, self.state)

    def mask(self) -> ActionMask:
        return action_mask(self.scenario, self.state)

    def observe(self) -> np.ndarray:
        return observe(self.scenario, self.state)

    def step(self, action: HybridAction):
        self.state, reward, done, info = step(self.scenario, self.state, action)
        return observe(self.scenario, self.state), reward, done, info

    def step_plan(self, plan: OffloadPlan):
        self.state, reward, done, info = step_plan(self.scenario, self.state, plan)
        return observe(self.scenario, self.state), reward, done, info

    def clone(self) -> "SaginEnv":
        return copy.deepcopy(self)
