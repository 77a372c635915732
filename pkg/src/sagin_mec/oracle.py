"""Exhaustive grid optimizer for small instances.

Candidates are every canonical (fractions, allocation level) choice per task
on a grid; tiers that receive no cycles get no allocation, so there are no
duplicate plans.  The search is exact over that grid: per-task candidates are
merged user by user and then across users, dropping only candidates that are
dominated in objective, budget use, node usage and (when coverage binds)
round durations.  Every candidate is scored with a vectorized straight-line
evaluation written independently of :mod:`sagin_mec.metrics`; the winning
plan is replayed through the environment and must pass its feasibility check.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import environment as env
from .metrics import OffloadFractions, ResourceAlloc, TailTarget, task_metrics
from .scenario import Scenario
from .taskgraph import topological_levels

_TOL = 1e-9


class CapExceeded(RuntimeError):
    pass


class InfeasibleEverywhere(RuntimeError):
    pass


@dataclass(frozen=True)
class GridSpec:
    mu_step: float = 0.25
    alloc_levels: tuple[float, ...] = (0.25, 0.5, 0.75, 1.0)
    max_candidates: int = 2_000_000    # cap on live merged candidates at any point
    max_route_combos: int = 100_000

    def __post_init__(self) -> None:
        n = 1.0 / self.mu_step
        if not (0 < self.mu_step <= 1 and abs(n - round(n)) < 1e-9):
            raise ValueError("mu_step must divide 1 evenly")
        if not self.alloc_levels or any(not 0 < a <= 1 for a in self.alloc_levels):
            raise ValueError("allocation levels must lie in (0, 1]")

    @property
    def mu_values(self) -> np.ndarray:
        n = int(round(1.0 / self.mu_step))
        return np.arange(n + 1) / n


@dataclass(frozen=True)
class CandidateTable:
    """Canonical per-task candidates; levels are fractions of the node's cap (0 = unused)."""

    mu: np.ndarray       # (C, 3)
    level: np.ndarray    # (C, 3) UAV, serving satellite, tail

    def __len__(self) -> int:
        return len(self.mu)


def candidate_table(grid: GridSpec) -> CandidateTable:
    mus, levels = [], []
    vals = grid.mu_values
    lev = list(grid.alloc_levels)
    for m in vals:
        if m == 1.0:
            mus.append((1.0, 1.0, 1.0)); levels.append((0.0, 0.0, 0.0))
            continue
        for n in vals:
            for l in vals:
                if n == 1.0 and l != 1.0:
                    continue    # satellite fraction is irrelevant once the UAV keeps everything
                s_n = (1 - m) * n
                s_l = (1 - m) * (1 - n) * l
                s_t = (1 - m) * (1 - n) * (1 - l)
                opts = [lev if s > 0 else [0.0] for s in (s_n, s_l, s_t)]
                for combo in itertools.product(*opts):
                    mus.append((m, n, l)); levels.append(combo)
    return CandidateTable(np.array(mus, dtype=float), np.array(levels, dtype=float))


def straight_line_metrics(W: float, F: float, mu: np.ndarray, f: np.ndarray,
                          rates: tuple[float, float, float], dists: tuple[float, float],
                          scn: Scenario) -> tuple[np.ndarray, np.ndarray]:
    """Latency and energy for arrays of plans on one route.

    ``mu``: (C,3) kept fractions; ``f``: (C,3) CPU Hz at UAV, satellite, tail;
    ``rates``: user-UAV, UAV-satellite, satellite-tail bit rates; ``dists``:
    UAV-satellite and satellite-tail distances.
    """
    c, rf = scn.compute, scn.rf
    light, b, iota = rf.light_speed_mps, c.overhead_factor, c.energy_factor
    m, n, l = mu[:, 0], mu[:, 1], mu[:, 2]
    fn, fl, ft = f[:, 0], f[:, 1], f[:, 2]
    r_mn, r_nl, r_t = rates
    d_nl, d_t = dists
    z = np.zeros_like(m)

    to_uav = 1 - m
    to_sat = (1 - m) * (1 - n)
    at_tail = (1 - m) * (1 - n) * (1 - l)
    at_uav = to_uav * n
    at_sat = to_sat * l

    t_loc = m * F / c.f_user_Hz
    e_loc = iota * m * F * c.f_user_Hz ** 2
    pay_mn = np.where(to_uav > 0, b * to_uav * W / r_mn, z)
    t_mn, e_mn = pay_mn, rf.tx_power_user_W * pay_mn
    with np.errstate(divide="ignore", invalid="ignore"):
        t_n = np.where(at_uav > 0, at_uav * F / fn, z)
        t_l = np.where(at_sat > 0, at_sat * F / fl, z)
        t_t = np.where(at_tail > 0, at_tail * F / ft, z)
    e_n = iota * at_uav * F * fn ** 2
    pay_nl = np.where(to_sat > 0, b * to_sat * W / r_nl, z)
    t_nl = np.where(to_sat > 0, d_nl / light + pay_nl, z)
    e_nl = rf.tx_power_uav_W * pay_nl
    e_l = iota * at_sat * F * fl ** 2
    pay_t = np.where(at_tail > 0, b * at_tail * W / r_t, z)
    t_tx = np.where(at_tail > 0, d_t / light + pay_t, z)
    e_tx = rf.tx_power_sat_W * pay_t
    e_t = iota * at_tail * F * ft ** 2

    latency = np.max(np.stack([t_loc, t_mn + t_n, t_mn + t_nl + t_l, t_mn + t_nl + t_tx + t_t]), axis=0)
    energy = e_loc + e_mn + e_n + e_nl + e_l + e_tx + e_t
    return latency, energy


# --------------------------------------------------------------------------
# routes
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Route:
    uav: int
    sat: int
    tail_arm: int


def route_inputs(scn: Scenario, state: env.EpisodeState, user: int, route: Route):
    pairing = env.Pairing(tuple(route.uav if m == user else 0 for m in range(scn.n_users)),
                          tuple(route.sat if n == route.uav else 0 for n in range(scn.n_uavs)),
                          tuple(route.tail_arm if l == route.sat else 0 for l in range(scn.n_sats)))
    rates, kind = env.route_rates(scn, state, pairing, user)
    if kind is TailTarget.CLOUD:
        r_t, d_t = rates.rate_sat_cloud, rates.dist_sat_cloud_m
    else:
        r_t, d_t = rates.rate_isl, rates.dist_isl_m
    return rates, kind, (rates.rate_user_uav, rates.rate_uav_sat, r_t), (rates.dist_uav_sat_m, d_t)


def _route_nodes(scn: Scenario, route: Route) -> tuple[tuple[str, int], ...]:
    kind, node = env.tail_target(scn, route.sat, route.tail_arm)
    tail = ("sat", node) if kind is TailTarget.ISL_SATELLITE else ("cloud", node)
    return (("uav", route.uav), ("sat", route.sat), tail)


def _alloc_hz(scn: Scenario, kind: TailTarget, levels: np.ndarray) -> np.ndarray:
    caps = np.array([scn.compute.f_uav_max_Hz, scn.compute.f_sat_max_Hz, env.tail_cap(scn, kind)])
    return levels * caps


def _route_windows(scn: Scenario, state: env.EpisodeState, route: Route) -> tuple[float, float]:
    """Remaining coverage of the route's serving satellite and of its tail link."""
    win_sat, win_cloud = env.remaining_windows(state.instance, state.elapsed_s)
    kind, node = env.tail_target(scn, route.sat, route.tail_arm)
    tail = win_sat[node] if kind is TailTarget.ISL_SATELLITE else win_cloud[route.sat, node]
    return float(win_sat[route.sat]), float(tail)


def allowed_candidates(table: CandidateTable, windows: tuple[float, float]) -> np.ndarray:
    """Candidates that send no traffic through an element already out of coverage."""
    m, n, l = table.mu.T
    to_sat = (1 - m) * (1 - n)
    residual = to_sat * (1 - l)
    return ((to_sat == 0) | (windows[0] > 0)) & ((residual == 0) | (windows[1] > 0))


def round_signatures(scn: Scenario, users: list[int]) -> list[tuple[env.Pairing, tuple[Route, ...]]]:
    """Distinct active-route assignments for one round, each with its first (lexicographic) pairing."""
    seen = {}
    for arms in itertools.product(*[range(a) for a in scn.head_arms]):
        p = env.Pairing.from_discrete(scn, arms)
        routes = []
        for m in users:
            n = p.user_uav[m]
            l = p.uav_sat[n]
            routes.append(Route(n, l, p.sat_tail[l]))
        sig = tuple(routes)
        if sig not in seen:
            seen[sig] = p
    return [(p, sig) for sig, p in seen.items()]


# --------------------------------------------------------------------------
# candidate sets and dominance pruning
# --------------------------------------------------------------------------

@dataclass
class Front:
    obj: np.ndarray          # (n,)
    cons: np.ndarray         # (n,) budget use of the owning user
    usage: np.ndarray        # (n, U) fraction of node capacity per (round, node) slot
    dur: np.ndarray          # (n, R) round durations (tracked only when coverage may bind)
    pick: np.ndarray         # (n, T) candidate index per task, -1 = not this front's task

    def __len__(self) -> int:
        return len(self.obj)

    def take(self, idx) -> "Front":
        return Front(self.obj[idx], self.cons[idx], self.usage[idx], self.dur[idx], self.pick[idx])


def pareto_prune(front: Front, use_cons: bool = True) -> Front:
    """Keep candidates not weakly dominated by another (ties keep the first)."""
    n = len(front)
    if n <= 1:
        return front
    cols = [front.cons[:, None]] if use_cons else []
    crit = np.hstack(cols + [front.usage, front.dur])
    order = np.lexsort(tuple(crit.T[::-1]) + (front.obj,))  # primary key: objective
    kept: list[int] = []
    kept_crit = np.empty((0, crit.shape[1]))
    for i in order:
        c = crit[i]
        if kept_crit.shape[0] and np.any(np.all(kept_crit <= c + 1e-12, axis=1)):
            continue
        kept.append(i)
        kept_crit = np.vstack([kept_crit, c])
    return front.take(np.array(kept, dtype=int))


def _merge(a: Front, b: Front, budget: float | None, capacity: bool) -> Front:
    ia, ib = np.meshgrid(np.arange(len(a)), np.arange(len(b)), indexing="ij")
    ia, ib = ia.ravel(), ib.ravel()
    obj = a.obj[ia] + b.obj[ib]
    cons = a.cons[ia] + b.cons[ib]
    usage = a.usage[ia] + b.usage[ib]
    dur = np.maximum(a.dur[ia], b.dur[ib])
    pick = np.maximum(a.pick[ia], b.pick[ib])
    keep = np.ones(len(obj), dtype=bool)
    if budget is not None:
        keep &= cons <= budget * (1 + _TOL)
    if capacity:
        keep &= np.all(usage <= 1 + _TOL, axis=1)
    return Front(obj[keep], cons[keep], usage[keep], dur[keep], pick[keep])


@dataclass
class OracleResult:
    objective: float
    objective_name: str
    plans: list[env.OffloadPlan]
    final_state: env.EpisodeState
    n_candidates_evaluated: int
    coverage_binding: bool
    audit_rows: list[dict] = field(default_factory=list)


def brute_force(scn: Scenario, grid: GridSpec = GridSpec(), objective: str | None = None,
                seed: int | None = None) -> OracleResult:
    """Grid optimum of the episode objective with UAVs held at their start positions."""
    objective = objective or scn.objective
    if objective != scn.objective:
        scn = scn.replace(objective=objective)
    state0 = env.reset(scn, seed)
    inst = state0.instance
    M, I = scn.n_users, scn.tasks_per_user
    levels = [topological_levels(g) for g in inst.graphs]
    n_rounds = max(len(lv) for lv in levels)
    round_tasks = [[(m, i) for m in range(M) if r < len(levels[m]) for i in levels[m][r]]
                   for r in range(n_rounds)]
    task_index = {(m, i): m * I + i for m in range(M) for i in range(I)}
    table = candidate_table(grid)

    sigs_per_round = []
    for r in range(n_rounds):
        users = sorted({m for m, _ in round_tasks[r]})
        sigs_per_round.append((users, round_signatures(scn, users)))
    n_combos = math.prod(len(s) for _, s in sigs_per_round)
    if n_combos > grid.max_route_combos:
        raise CapExceeded(f"{n_combos} route combinations exceed cap {grid.max_route_combos}")

    # per-(user, task, route) scores are shared across combos
    cache: dict = {}
    n_eval = 0

    def score(m: int, i: int, route: Route):
        nonlocal n_eval
        key = (m, i, route)
        if key not in cache:
            _, kind, rates, dists = route_inputs(scn, state0, m, route)
            task = inst.graphs[m].task(i)
            f = _alloc_hz(scn, kind, table.level)
            lat, en = straight_line_metrics(task.data_size_bits, task.cpu_cycles, table.mu, f,
                                            rates, dists, scn)
            n_eval += len(table)
            cache[key] = (lat, en, allowed_candidates(table, _route_windows(scn, state0, route)))
        return cache[key]

    budget = scn.t_max_s if objective == "energy" else scn.e_max_J
    best = None
    audit = []
    for track_dur in (False, True):
        best = None
        for combo in itertools.product(*[s for _, s in sigs_per_round]):
            res = _solve_combo(scn, state0, combo, round_tasks, sigs_per_round, task_index,
                               table, score, budget, objective, grid, track_dur)
            if not track_dur:
                audit.append(dict(routes=_combo_text(combo), objective=res[0] if res else math.inf,
                                  feasible=res is not None))
            if res is not None and (best is None or res[0] < best[0] - 1e-12):
                best = (res[0], combo, res[1])
        if best is None:
            raise InfeasibleEverywhere("no grid plan satisfies the constraints")
        plans = _build_plans(scn, state0, best[1], round_tasks, task_index, table, best[2])
        final, violations = _replay(scn, state0, plans)
        if not violations:
            return OracleResult(env.episode_objective(scn, final), objective, plans, final, n_eval,
                                track_dur, audit)
        if any(v.constraint != "32a" for v in violations):
            raise AssertionError(f"oracle plan violates {violations}")
    raise InfeasibleEverywhere("no grid plan respects the coverage windows")


def _combo_text(combo) -> str:
    return " | ".join(";".join(f"u{r.uav}s{r.sat}t{r.tail_arm}" for r in sig) for _, sig in combo)


def _solve_combo(scn, state0, combo, round_tasks, sigs_per_round, task_index, table, score,
                 budget, objective, grid, track_dur):
    M = scn.n_users
    T = scn.n_tasks
    R = len(round_tasks)
    slots = {}
    for r, (_, sig) in enumerate(combo):
        users = sigs_per_round[r][0]
        for m, rt in zip(users, sig):
            for node in _route_nodes(scn, rt):
                slots.setdefault((r, node), len(slots))
    U = len(slots)

    user_fronts = []
    for m in range(M):
        front = Front(np.zeros(1), np.zeros(1), np.zeros((1, U)), np.zeros((1, R if track_dur else 0)),
                      np.full((1, T), -1, dtype=int))
        for r, (_, sig) in enumerate(combo):
            users = sigs_per_round[r][0]
            if m not in users:
                continue
            rt = sig[users.index(m)]
            cols = [slots[(r, node)] for node in _route_nodes(scn, rt)]
            for (mm, i) in round_tasks[r]:
                if mm != m:
                    continue
                lat, en, allowed = score(m, i, rt)
                obj = en if objective == "energy" else lat
                cons = lat if objective == "energy" else en
                usage = np.zeros((len(table), U))
                for j, c in enumerate(cols):
                    usage[:, c] += table.level[:, j]
                dur = np.zeros((len(table), R if track_dur else 0))
                if track_dur:
                    dur[:, r] = lat
                pick = np.full((len(table), T), -1, dtype=int)
                pick[:, task_index[(m, i)]] = np.arange(len(table))
                task_front = Front(obj, cons, usage, dur, pick)
                keep = allowed & (task_front.cons <= budget * (1 + _TOL))
                task_front = pareto_prune(task_front.take(np.flatnonzero(keep)))
                front = pareto_prune(_merge(front, task_front, budget, True))
                if len(front) > grid.max_candidates:
                    raise CapExceeded(f"{len(front)} live candidates exceed cap")
                if len(front) == 0:
                    return None
        user_fronts.append(front)

    total = user_fronts[0]
    total = pareto_prune(total, use_cons=False)
    for f in user_fronts[1:]:
        total = _merge(total, pareto_prune(f, use_cons=False), None, True)
        total = pareto_prune(total, use_cons=False)
        if len(total) > grid.max_candidates:
            raise CapExceeded(f"{len(total)} live candidates exceed cap")
        if len(total) == 0:
            return None
    if track_dur:
        ends = np.cumsum(total.dur, axis=1)
        starts = ends - total.dur
        ok = np.ones(len(total), dtype=bool)
        win_sat, win_cloud = state0.instance.window_end_sat, state0.instance.window_end_cloud
        for r, (_, sig) in enumerate(combo):
            for rt in sig:
                # conservative: every in-view element of the route must outlast the round
                kind, node = env.tail_target(scn, rt.sat, rt.tail_arm)
                tail_end = win_sat[node] if kind is TailTarget.ISL_SATELLITE else win_cloud[rt.sat, node]
                for end in (win_sat[rt.sat], tail_end):
                    if end > 0:
                        ok &= ends[:, r] <= end + 1e-12
        total = total.take(np.flatnonzero(ok))
        if len(total) == 0:
            return None
    k = int(np.argmin(total.obj))
    return float(total.obj[k]), total.pick[k]


def _build_plans(scn, state0, combo, round_tasks, task_index, table, pick) -> list[env.OffloadPlan]:
    plans = []
    for r, (pairing, _) in enumerate(combo):
        tasks = {}
        for (m, i) in round_tasks[r]:
            c = int(pick[task_index[(m, i)]])
            mu = table.mu[c]
            l = pairing.uav_sat[pairing.user_uav[m]]
            kind, _ = env.tail_target(scn, l, pairing.sat_tail[l])
            f = _alloc_hz(scn, kind, table.level[c:c + 1])[0]
            tasks[(m, i)] = env.TaskPlan(OffloadFractions(*map(float, mu)), ResourceAlloc(*map(float, f)))
        plans.append(env.OffloadPlan(pairing, tasks, state0.uav_xyz.copy()))
    return plans


def _replay(scn, state0, plans):
    state = state0
    violations = []
    for plan in plans:
        state, _, done, info = env.step_plan(scn, state, plan)
        violations += info["violations"]
        if done:
            break
    return state, violations


def cross_check(scn: Scenario, grid: GridSpec = GridSpec(), seed: int | None = None) -> dict:
    """Compare the straight-line scores with :func:`metrics.task_metrics` on every candidate.

    Covers every task of every user on every route, masked or not.
    """
    state0 = env.reset(scn, seed)
    inst = state0.instance
    table = candidate_table(grid)
    worst_lat = worst_en = 0.0
    n = 0
    routes = [Route(u, s, t) for u in range(scn.n_uavs) for s in range(scn.n_sats)
              for t in range(scn.n_sats - 1 + scn.n_clouds)]
    for m in range(scn.n_users):
        for rt in routes:
            link_rates, kind, rates, dists = route_inputs(scn, state0, m, rt)
            f = _alloc_hz(scn, kind, table.level)
            for task in inst.graphs[m].tasks:
                lat, en = straight_line_metrics(task.data_size_bits, task.cpu_cycles, table.mu, f,
                                                rates, dists, scn)
                for c in range(len(table)):
                    tm = task_metrics(task, OffloadFractions(*table.mu[c]), ResourceAlloc(*f[c]),
                                      link_rates, scn.compute, kind, scn.rf)
                    worst_lat = max(worst_lat, abs(tm.total_latency - lat[c]) / max(abs(tm.total_latency), 1e-300))
                    worst_en = max(worst_en, abs(tm.total_energy - en[c]) / max(abs(tm.total_energy), 1e-300))
                    n += 1
    return dict(n_plans=n, max_rel_err_latency=worst_lat, max_rel_err_energy=worst_en)


def write_oracle_csv(result: OracleResult, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["kind", "round", "plan", "objective", "feasible"])
        for row in result.audit_rows:
            w.writerow(["route_combo", "", row["routes"], repr(row["objective"]), int(row["feasible"])])
        for r, plan in enumerate(result.plans):
            parts = []
            for (m, i), tp in sorted(plan.tasks.items()):
                fr, al = tp.fractions, tp.alloc
                parts.append(f"u{m}t{i}:mu=({fr.mu_user:g},{fr.mu_uav:g},{fr.mu_sat:g})"
                             f"f=({al.f_uav_Hz:.4g},{al.f_sat_Hz:.4g},{al.f_tail_Hz:.4g})")
            desc = f"pairing={list(plan.pairing.to_discrete())} " + " ".join(parts)
            w.writerow(["best_round", r, desc, "", 1])
        w.writerow(["best_total", "", result.objective_name, repr(result.objective), 1])
