"""Acceptance criteria, each checked at its stated tolerance.

Every test records one PASS/FAIL line (echoed immediately and repeated in the
pytest terminal summary).  The learner criteria share one set of training runs.
"""

import dataclasses
import math
import time

import numpy as np
import pytest
import torch

from sagin_mec import environment as env
from sagin_mec.baselines import greedy_policy, local_only_policy, random_policy, run_policy
from sagin_mec.channel import (
    RfParams, isl_rate, outdated_correlation, rician_gain, sat_gain_outdated, sat_los_gain,
    uplink_rate_user_uav,
)
from sagin_mec.cli import main as cli_main
from sagin_mec.geometry import GeoParams, coverage_time
from sagin_mec.hybrid_sac import TrainConfig, evaluate_bundle, select_action, train
from sagin_mec.hybrid_sac.assist import decision_assist_pairs
from sagin_mec.hybrid_sac.losses import discrete_soft_q_loss
from sagin_mec.hybrid_sac.networks import DiscreteAgent, MlpSpec
from sagin_mec.metrics import (
    ComputeParams, LinkRates, OffloadFractions, ResourceAlloc, TailTarget, task_metrics,
)
from sagin_mec.oracle import GridSpec, brute_force, cross_check
from sagin_mec.scenario import Scenario, micro_scenario
from sagin_mec.taskgraph import MB_BITS, Task

from toy_nets import grad_check, loss_cases, toy_agents

MICRO = micro_scenario()
SEEDS = (0, 1, 2, 3, 4)
EPISODE_BUDGET = 3000
LEARNER_CFG = TrainConfig(
    hidden=(64, 64), batch_size=128, warmup_transitions=128, reward_scale=100.0,
    alpha_continuous=0.01, alpha_discrete=0.02, lr=1e-3, updates_per_episode=4,
    mpo_every=4, lr_decay_episodes=EPISODE_BUDGET, eval_every=100,
)
GAP = 0.15
RANDOM_MARGIN = 0.20
N_RANDOM = 201


# ---------------------------------------------------------------------------
# 1. coverage time
# ---------------------------------------------------------------------------

def test_c1_coverage_time(record):
    start = time.perf_counter()
    t = coverage_time(GeoParams())
    wall = time.perf_counter() - start
    ok = abs(t - 238.7) <= 0.01 * 238.7 and wall < 1.0
    assert record("C1 coverage_time", ok, f"{t:.4f} s vs 238.7 s +-1%, {wall:.1e} s (<1 s)")


# ---------------------------------------------------------------------------
# 2. formula unit suite
# ---------------------------------------------------------------------------

def _deterministic_cases():
    """(name, computed, independently derived reference)."""
    rf = RfParams()
    task = Task(0, 0.8 * MB_BITS, 3e9)
    rates = LinkRates(2e7, 1e7, rate_sat_cloud=2e9, dist_uav_sat_m=1e6, dist_sat_cloud_m=1.2e6)
    worked = task_metrics(task, OffloadFractions(0.5, 0.5, 0.5), ResourceAlloc(0.25e9, 0.5e9, 1.5e9),
                          rates, ComputeParams(), TailTarget.CLOUD, rf)
    local = task_metrics(task, OffloadFractions(1, 1, 1), ResourceAlloc(), rates, ComputeParams(),
                         TailTarget.NONE, rf)
    gains = np.sqrt([1e-6, 4e-7, 1e-7]).astype(complex)
    return [
        ("coverage time", coverage_time(GeoParams()), 238.72547889984392),
        ("ISL rate at 1000 km", isl_rate(1e6, rf), 3797969712.4189053),
        ("SINR uplink rate", uplink_rate_user_uav(0, gains, rf), 15849605.771303331),
        ("LoS gain power at 1000 km", abs(sat_los_gain(1e6, rf)) ** 2, 1.7997893508315155e-13),
        ("outdated correlation at 800 km", outdated_correlation(800e3 / rf.light_speed_mps, rf),
         0.004844375681367646),
        ("worked task latency", worked.total_latency, 15.0),
        ("worked task energy", worked.total_energy, 100.14918),
        ("local task latency", local.total_latency, 30.0),
        ("local task energy", local.total_energy, 3.0),
    ]


def _monte_carlo_cases(n=100_000):
    rf = RfParams()
    rng = np.random.default_rng(12345)
    d, k = 80.0, rf.rician_factor
    rician = np.mean([abs(rician_gain(d, rf, rng)) ** 2 for _ in range(n)])
    rician_ref = k / (k + 1) * d ** -rf.pathloss_los + 1 / (k + 1) * d ** -rf.pathloss_nlos
    ds = 1.1e6
    outdated = np.mean([abs(sat_gain_outdated(ds, ds / rf.light_speed_mps, rf, rng)) ** 2
                        for _ in range(n)])
    return [("Rician mean power", rician, rician_ref),
            ("outdated satellite gain mean power", outdated, abs(sat_los_gain(ds, rf)) ** 2)]


def test_c2_formula_suite(record):
    start = time.perf_counter()
    worst_det = max(abs(c - r) / abs(r) for _, c, r in _deterministic_cases())
    worst_mc = max(abs(c - r) / abs(r) for _, c, r in _monte_carlo_cases())
    wall = time.perf_counter() - start
    ok = worst_det <= 1e-9 and worst_mc <= 0.02 and wall < 30.0
    assert record("C2 formula suite", ok,
                  f"deterministic max rel err {worst_det:.2e} (<=1e-9), "
                  f"Monte-Carlo max rel err {worst_mc:.2e} (<=2e-2, 1e5 draws), {wall:.1f} s (<30 s)")


# ---------------------------------------------------------------------------
# 3. cycle conservation
# ---------------------------------------------------------------------------

def test_c3_cycle_conservation(record):
    start = time.perf_counter()
    rng = np.random.default_rng(7)
    triples = rng.random((10_000, 3))
    triples[rng.random(triples.shape) < 0.1] = 1.0
    triples[rng.random(triples.shape) < 0.1] = 0.0
    cycles = 3e9
    worst = 0.0
    for m, n, l in triples:
        shares = OffloadFractions(m, n, l).shares()
        assert min(shares) >= 0.0
        worst = max(worst, abs(math.fsum(s * cycles for s in shares) - cycles) / cycles)
    wall = time.perf_counter() - start
    assert record("C3 cycle conservation", worst <= 1e-12 and wall < 5.0,
                  f"max rel err {worst:.2e} over 1e4 triples (<=1e-12), {wall:.2f} s (<5 s)")


# ---------------------------------------------------------------------------
# 4. oracle scoring vs offload metrics
# ---------------------------------------------------------------------------

def test_c4_oracle_equivalence(record):
    start = time.perf_counter()
    res = cross_check(MICRO, GridSpec(mu_step=0.25))
    wall = time.perf_counter() - start
    worst = max(res["max_rel_err_latency"], res["max_rel_err_energy"])
    ok = worst <= 1e-9 and wall < 120.0 and res["n_plans"] > 0
    assert record("C4 oracle equivalence", ok,
                  f"{res['n_plans']} plans, max rel err {worst:.2e} (<=1e-9), {wall:.1f} s (<120 s)")


# ---------------------------------------------------------------------------
# 5. gradient checks
# ---------------------------------------------------------------------------

def test_c5_gradient_checks(record):
    start = time.perf_counter()
    worst, where = 0.0, ""
    for seed in range(5):
        disc, cont, batch = toy_agents(seed)
        for name, fn, params in loss_cases(disc, cont, batch):
            err = grad_check(fn, params)
            if err > worst:
                worst, where = err, f"{name} net {seed}"
    wall = time.perf_counter() - start
    assert record("C5 gradient checks", worst <= 1e-4 and wall < 60.0,
                  f"max rel err {worst:.2e} ({where}) over 6 losses x 5 nets (<=1e-4), {wall:.1f} s (<60 s)")


# ---------------------------------------------------------------------------
# 6. decision-assist effect on a frozen toy batch
# ---------------------------------------------------------------------------

def _assist_toy(seed: int, assist: bool) -> float:
    torch.manual_seed(seed)
    g = np.random.default_rng(seed)
    head_arms = [3, 4, 2]
    H, A, n_states = len(head_arms), max(head_arms), 32
    mask = np.zeros((n_states, H, A), dtype=bool)
    for s in range(n_states):
        for h, n in enumerate(head_arms):
            avail = g.random(n) < 0.6
            if not avail.any():
                avail[g.integers(n)] = True
            mask[s, h, :n] = avail
    obs = np.concatenate([g.normal(size=(n_states, 4)), mask.reshape(n_states, -1)], 1).astype(np.float32)
    rows_obs, rows_arms, rows_rew = [], [], []
    for s in range(n_states):
        for _ in range(4):
            rows_obs.append(obs[s])
            rows_arms.append([g.choice(np.flatnonzero(mask[s, h, :n])) for h, n in enumerate(head_arms)])
            rows_rew.append(1.0 + 0.2 * g.standard_normal())
        if assist:
            for tr in decision_assist_pairs(obs[s], mask[s], head_arms, 1):
                rows_obs.append(tr.state)
                rows_arms.append(tr.action.discrete)
                rows_rew.append(tr.reward)
    o = torch.tensor(np.array(rows_obs))
    arms = torch.tensor(np.array(rows_arms, dtype=np.int64))
    rew = torch.tensor(rows_rew, dtype=torch.float32)
    done = torch.ones(len(rew))
    agent = DiscreteAgent(obs.shape[1], head_arms, MlpSpec((64, 64), "silu"))
    opt = torch.optim.Adam(agent.q.parameters(), lr=3e-3)
    for _ in range(500):
        opt.zero_grad()
        discrete_soft_q_loss(agent, o, arms, rew, o, done, 0.99).backward()
        opt.step()
    with torch.no_grad():
        q = agent.q(torch.tensor(obs)).numpy()
    valid = np.zeros((H, A), dtype=bool)
    for h, n in enumerate(head_arms):
        valid[h, :n] = True
    masked = (~mask) & valid[None]
    return float(np.abs(q[masked]).mean() / np.abs(q[mask]).mean())


def test_c6_assist_effect(record):
    start = time.perf_counter()
    ratios = [_assist_toy(s, True) for s in range(3)]
    wall = time.perf_counter() - start
    control = _assist_toy(0, False)
    worst = max(ratios)
    assert record("C6 assist effect", worst < 0.05 and wall < 60.0,
                  f"masked/available mean |Q| = {worst:.4f} (<0.05) after 500 updates on 3 batches, "
                  f"{wall:.1f} s (<60 s); without assist pairs {control:.3f}")


# ---------------------------------------------------------------------------
# 7 and 8. learned policy quality and decision-assist ablation
# ---------------------------------------------------------------------------

def _train_seeds(cfg: TrainConfig, threshold: float, stop_at_threshold: bool) -> list[dict]:
    out = []
    for seed in SEEDS:
        stamps = []
        start = time.perf_counter()

        def stamp(row):
            stamps.append((row["episode"], row["eval_energy_J"], time.perf_counter() - start))

        stop = (lambda row: row["eval_energy_J"] <= threshold) if stop_at_threshold else None
        res = train(MICRO, dataclasses.replace(cfg, seed=seed),
                    EPISODE_BUDGET, stop_when=stop, callback=stamp)
        hits = [(ep + 1, t) for ep, e, t in stamps if e <= threshold]
        final = evaluate_bundle(MICRO, res.bundle, MICRO.seed)
        out.append(dict(seed=seed, result=res, wall_s=res.wall_s,
                        final_energy=final["energy_J"] if final["feasible"] else math.inf,
                        episodes_to_threshold=hits[0][0] if hits else math.inf,
                        seconds_to_threshold=hits[0][1] if hits else res.wall_s))
    return out


@pytest.fixture(scope="module")
def oracle_micro():
    return brute_force(MICRO, GridSpec(mu_step=0.25))


@pytest.fixture(scope="module")
def threshold(oracle_micro):
    return (1.0 + GAP) * oracle_micro.objective


@pytest.fixture(scope="module")
def assist_runs(threshold):
    return _train_seeds(LEARNER_CFG, threshold, stop_at_threshold=False)


@pytest.mark.slow
def test_c7_micro_learner(record, oracle_micro, threshold, assist_runs):
    random_energy = [run_policy(MICRO, "random", rng_seed=s)["energy_J"] for s in range(N_RANDOM)]
    random_median = float(np.median(random_energy))
    finals = [r["final_energy"] for r in assist_runs]
    median = float(np.median(finals))
    wall = sum(r["wall_s"] for r in assist_runs)
    ok = (median <= threshold and median <= (1.0 - RANDOM_MARGIN) * random_median
          and EPISODE_BUDGET <= 20_000 and wall <= 15 * 60)
    assert record(
        "C7 micro learner", ok,
        f"median final {median:.3f} J (seeds {', '.join(f'{e:.2f}' for e in finals)}); "
        f"oracle {oracle_micro.objective:.4f} J, limit {threshold:.3f} J; random median "
        f"{random_median:.2f} J, limit {(1 - RANDOM_MARGIN) * random_median:.2f} J; "
        f"{EPISODE_BUDGET} episodes/seed, {wall:.0f} s total (<=900 s)")


@pytest.mark.slow
def test_c8_assist_ablation(record, threshold, assist_runs):
    no_assist_cfg = dataclasses.replace(LEARNER_CFG, assist=False)
    ablation = _train_seeds(no_assist_cfg, threshold, stop_at_threshold=True)
    with_eps = [r["episodes_to_threshold"] for r in assist_runs]
    without_eps = [r["episodes_to_threshold"] for r in ablation]
    med_with, med_without = float(np.median(with_eps)), float(np.median(without_eps))
    wall = sum(r["seconds_to_threshold"] for r in assist_runs) + sum(r["wall_s"] for r in ablation)
    ok = med_with < med_without and wall <= 30 * 60
    assert record(
        "C8 assist ablation", ok,
        f"median episodes to {threshold:.3f} J: assist {med_with:g} {with_eps} vs "
        f"no assist {med_without:g} {without_eps}; {wall:.0f} s (<=1800 s)")


# ---------------------------------------------------------------------------
# 9. shipped policies emit feasible plans; violations terminate with the right letter
# ---------------------------------------------------------------------------

STRUCTURAL = {"32b", "32c", "32d", "32e", "32f", "32g", "32i"}


def _expected_letters(scn, state, plan, metrics):
    """Independent recomputation of the budget and coverage constraints for one round."""
    letters = set()
    round_s = max(m.total_latency for m in metrics.values())
    win_sat, win_cloud = env.remaining_windows(state.instance, state.elapsed_s)
    for (m, _), tp in plan.tasks.items():
        fr = tp.fractions
        n = plan.pairing.user_uav[m]
        l = plan.pairing.uav_sat[n]
        kind, node = env.tail_target(scn, l, plan.pairing.sat_tail[l])
        if (1 - fr.mu_user) * (1 - fr.mu_uav) > 0 and win_sat[l] < max(round_s, 1e-300):
            letters.add("32a")
        if fr.shares()[3] > 0:
            w = win_sat[node] if kind is TailTarget.ISL_SATELLITE else win_cloud[l, node]
            if w < max(round_s, 1e-300):
                letters.add("32a")
    for m in range(scn.n_users):
        lat = state.user_latency[m] + sum(t.total_latency for (u, _), t in metrics.items() if u == m)
        en = state.user_energy[m] + sum(t.total_energy for (u, _), t in metrics.items() if u == m)
        if scn.objective == "energy" and lat > scn.t_max_s * (1 + 1e-9):
            letters.add("32h")
        if scn.objective == "latency" and en > scn.e_max_J * (1 + 1e-9):
            letters.add("33a")
    return letters


def _audit_policy(scn, policy, seeds):
    plans = structural_ok = letter_ok = terminated_ok = 0
    for seed in seeds:
        state = env.reset(scn, seed)
        done = False
        while not done:
            action = policy(state)
            plan, _ = env.decode_action(scn, state, action)
            metrics = env.plan_metrics(scn, state, plan)
            violations = env.feasibility_check(scn, state, plan, metrics)
            got = {v.constraint for v in violations}
            plans += 1
            structural_ok += not (got & STRUCTURAL)
            letter_ok += got == _expected_letters(scn, state, plan, metrics)
            state, reward, done, info = env.step(scn, state, action)
            if violations:
                terminated_ok += done and reward == 0.0
            else:
                terminated_ok += 1
    return plans, structural_ok, letter_ok, terminated_ok


@pytest.mark.slow
def test_c9_shipped_policy_feasibility(record, assist_runs):
    scenarios = [MICRO, micro_scenario(objective="latency", e_max_J=20.0),
                 Scenario(n_users=3, n_uavs=2, n_sats=3, n_clouds=2, tasks_per_user=3, seed=1,
                          t_max_s=120.0)]
    rng = np.random.default_rng(0)
    bundle = assist_runs[0]["result"].bundle
    start = time.perf_counter()
    totals = np.zeros(4, dtype=int)
    fully_feasible = []
    for scn in scenarios:
        pols = {
            "random": lambda st, s=scn: random_policy(s, st, env.action_mask(s, st), rng),
            "local_only": lambda st, s=scn: local_only_policy(s, st),
            "greedy": lambda st, s=scn: greedy_policy(s, st),
        }
        if scn is MICRO:
            pols["learned"] = lambda st: select_action(
                bundle, env.observe(MICRO, st), env.discrete_mask(MICRO, st), True)
        for name, pol in pols.items():
            totals += _audit_policy(scn, pol, range(10))
        fully_feasible.append(run_policy(scn, "greedy")["feasible"])
    learned_feasible = evaluate_bundle(MICRO, bundle, MICRO.seed)["feasible"]
    wall = time.perf_counter() - start
    plans, structural, letters, terminated = totals
    ok = (structural == plans and letters == plans and terminated == plans
          and all(fully_feasible) and learned_feasible and wall < 60.0)
    assert record(
        "C9 policy feasibility", ok,
        f"{plans} plans: structural pass {structural}/{plans}, letters match {letters}/{plans}, "
        f"violations terminate {terminated}/{plans}; greedy feasible on {sum(fully_feasible)}/"
        f"{len(fully_feasible)} scenarios; learned micro plan feasible={learned_feasible}; "
        f"{wall:.1f} s (<60 s)")


# ---------------------------------------------------------------------------
# 10. reproducible metrics files
# ---------------------------------------------------------------------------

def test_c10_bitwise_reproducible(record, tmp_path):
    cfg_text = "\n".join([
        "[scenario]", "n_users = 2", "n_uavs = 1", "n_sats = 2", "n_clouds = 1",
        "tasks_per_user = 2", "leo_offsets_m = [200000.0, 1800000.0]", "seed = 3",
        "[run]", "seeds = [0, 1]", 'policy = "random"', "episodes = 3",
        "[train]", "hidden = [32, 32]", "batch_size = 32", "warmup_transitions = 32",
        "updates_per_episode = 2", "eval_every = 10", "mpo_batch = 32", "",
    ])
    cfg = tmp_path / "micro.toml"
    cfg.write_text(cfg_text)
    files = {}
    start = time.perf_counter()
    for rerun in ("a", "b"):
        root = tmp_path / rerun
        assert cli_main(["simulate", "--config", str(cfg), "--out", str(root)]) == 0
        assert cli_main(["train", "--config", str(cfg), "--episodes", "40", "--out", str(root)]) == 0
        files[rerun] = {p.relative_to(root): p.read_bytes() for p in sorted(root.rglob("*.csv"))}
    wall = time.perf_counter() - start
    same = files["a"].keys() == files["b"].keys() and all(files["a"][k] == files["b"][k] for k in files["a"])
    assert record("C10 bitwise reproducibility", same and len(files["a"]) >= 6 and wall < 60.0,
                  f"{len(files['a'])} CSV files compared byte for byte across two reruns, "
                  f"{wall:.1f} s (<60 s)")
