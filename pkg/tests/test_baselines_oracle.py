import csv
import itertools

import numpy as np
import pytest

from sagin_mec import environment as env
from sagin_mec.baselines import greedy_plan, local_only_policy, random_policy, run_policy
from sagin_mec.metrics import OffloadFractions, ResourceAlloc, TailTarget, task_metrics
from sagin_mec.oracle import (
    CapExceeded, GridSpec, InfeasibleEverywhere, brute_force, candidate_table, cross_check,
    write_oracle_csv,
)
from sagin_mec.scenario import Scenario, micro_scenario

MICRO = micro_scenario()
ONE = Scenario(n_users=1, n_uavs=1, n_sats=1, n_clouds=1, tasks_per_user=1, seed=4)


@pytest.fixture(scope="module")
def micro_oracle():
    return brute_force(MICRO)


def test_random_policy_respects_mask():
    rng = np.random.default_rng(0)
    s = env.reset(MICRO)
    mask = env.action_mask(MICRO, s)
    for _ in range(200):
        a = random_policy(MICRO, s, mask, rng)
        assert all(mask.discrete[h, arm] for h, arm in enumerate(a.discrete))
        assert np.all(np.abs(a.continuous) <= 1)


def test_local_only_plan_is_all_local():
    s = env.reset(MICRO)
    plan, _ = env.decode_action(MICRO, s, local_only_policy(MICRO, s))
    for tp in plan.tasks.values():
        assert tp.fractions.shares() == (1.0, 0.0, 0.0, 0.0)
        assert tp.alloc == ResourceAlloc()


def test_unknown_policy_rejected():
    with pytest.raises(ValueError):
        run_policy(MICRO, "nope")


def test_candidate_table_contents():
    coarse = candidate_table(GridSpec(1.0, (1.0,)))
    rows = {tuple(m) for m in coarse.mu}
    assert (1.0, 1.0, 1.0) in rows and (0.0, 0.0, 0.0) in rows
    assert len(candidate_table(GridSpec())) == 2929
    with pytest.raises(ValueError):
        GridSpec(0.3)


def test_cross_check_matches_task_metrics():
    res = cross_check(MICRO)
    assert res["n_plans"] > 0
    assert res["max_rel_err_latency"] <= 1e-9 and res["max_rel_err_energy"] <= 1e-9


def test_single_task_hand_enumeration():
    grid = GridSpec(0.5, (1.0,))
    res = brute_force(ONE, grid)
    s = env.reset(ONE)
    task = s.instance.graphs[0].task(0)
    pairing = env.Pairing((0,), (0,), (0,))
    rates, kind = env.route_rates(ONE, s, pairing, 0)
    assert kind is TailTarget.CLOUD
    c = ONE.compute
    win = s.instance.window_end_sat[0]
    best = np.inf
    for m, n, l in itertools.product((0.0, 0.5, 1.0), repeat=3):
        fr = OffloadFractions(m, n, l)
        _, s_n, s_l, s_t = fr.shares()
        al = ResourceAlloc(c.f_uav_max_Hz if s_n else 0.0, c.f_sat_max_Hz if s_l else 0.0,
                           c.f_cloud_max_Hz if s_t else 0.0)
        tm = task_metrics(task, fr, al, rates, c, kind, ONE.rf)
        if tm.total_latency > ONE.t_max_s:
            continue
        if (1 - m) * (1 - n) > 0 and tm.total_latency > win:
            continue
        best = min(best, tm.total_energy)
    assert res.objective == pytest.approx(best, rel=1e-9)


def test_greedy_budget_counts_tasks_planned_in_same_round():
    # both tasks of each user are ready at once; the second must see the first's energy
    scn = micro_scenario(objective="latency", e_max_J=20.0)
    res = run_policy(scn, "greedy")
    assert res["feasible"]
    assert np.all(res["state"].user_energy <= scn.e_max_J)


def test_micro_optimum_and_greedy(micro_oracle):
    assert micro_oracle.objective == pytest.approx(13.8839, rel=1e-4)
    assert not micro_oracle.final_state.violations
    greedy = run_policy(MICRO, "greedy")
    assert greedy["feasible"]
    assert greedy["energy_J"] >= micro_oracle.objective - 1e-9
    assert greedy["energy_J"] == pytest.approx(micro_oracle.objective, rel=1e-6)


def test_oracle_lower_bounds_feasible_policies(micro_oracle):
    for seed in range(30):
        r = run_policy(MICRO, "random", rng_seed=seed)
        if r["feasible"]:
            assert r["energy_J"] >= micro_oracle.objective - 1e-9


def test_refining_grid_never_worsens(micro_oracle):
    coarse = brute_force(MICRO, GridSpec(0.5, (0.5, 1.0)))
    assert micro_oracle.objective <= coarse.objective + 1e-12


def test_oracle_plans_replay_feasibly(micro_oracle):
    s = env.reset(MICRO)
    for plan in micro_oracle.plans:
        assert env.feasibility_check(MICRO, s, plan) == []
        s, *_ = env.step_plan(MICRO, s, plan)
    assert s.done and env.episode_objective(MICRO, s) == pytest.approx(micro_oracle.objective)


def test_latency_objective_oracle():
    scn = micro_scenario(objective="latency")
    res = brute_force(scn, GridSpec(0.5, (0.5, 1.0)))
    assert res.objective_name == "latency"
    local = run_policy(scn, "local_only")
    if local["feasible"]:
        assert res.objective <= local["latency_s"] + 1e-9


def test_caps_and_infeasible():
    with pytest.raises(CapExceeded):
        brute_force(MICRO, GridSpec(max_route_combos=1))
    with pytest.raises(InfeasibleEverywhere):
        brute_force(ONE.replace(t_max_s=1e-3), GridSpec(0.5, (1.0,)))


def test_oracle_csv(tmp_path, micro_oracle):
    path = tmp_path / "oracle.csv"
    write_oracle_csv(micro_oracle, path)
    rows = list(csv.DictReader(path.open()))
    assert rows[-1]["kind"] == "best_total"
    assert float(rows[-1]["objective"]) == micro_oracle.objective
    assert sum(r["kind"] == "best_round" for r in rows) == len(micro_oracle.plans)
