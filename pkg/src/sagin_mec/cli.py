"""Command-line entry point: ``sagin-mec {simulate,train,evaluate,oracle,sweep,report}``."""

from __future__ import annotations

import argparse
import concurrent.futures
import csv
import dataclasses
import json
import logging
import os
import sys
import traceback
from pathlib import Path

import numpy as np

from . import baselines, config as cfgmod, environment as env, oracle, report as reportmod
from .hybrid_sac import (CheckpointError, evaluate_bundle, load_checkpoint, save_checkpoint, train,
                         write_metrics_csv)

log = logging.getLogger("sagin_mec")
OUT_ENV = "SAGIN_MEC_OUT"
CSV_SCHEMA = 1
ROW_FIELDS = ("schema_version", "run_id", "seed", "episode", "reward", "energy_J", "latency_s",
              "violations")


def _out_root(cfg: cfgmod.Config, override: str | None) -> Path:
    if override:
        return Path(override)
    return Path(os.environ.get(OUT_ENV) or cfg.run.out)


def _run_dir(cfg: cfgmod.Config, root: Path, label: str | None = None) -> tuple[str, Path]:
    run_id = f"{label or cfg.run.mode}_{cfg.run.objective}_{cfg.digest()}"
    d = root / run_id
    d.mkdir(parents=True, exist_ok=True)
    cfgmod.write_config(cfg, d / "config.toml")
    return run_id, d


def _write_rows(path: Path, rows: list[dict]) -> None:
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=ROW_FIELDS, extrasaction="ignore")
        w.writeheader()
        for r in rows:
            w.writerow({"schema_version": CSV_SCHEMA,
                        **{k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()}})


def _write_trace(path: Path, trace: list[dict]) -> None:
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["step", "time_s", "reward", "energy_J", "latency_s", "violations"])
        w.writeheader()
        for k, r in enumerate(trace):
            w.writerow({"step": k, **{key: (repr(v) if isinstance(v, float) else v) for key, v in r.items()}})


def _summarize(run_dir: Path, run_id: str, cfg: cfgmod.Config, policy: str, seeds: list[dict],
               extra: dict | None = None) -> dict:
    summary = dict(run_id=run_id, mode=cfg.run.mode, objective=cfg.run.objective, policy=policy,
                   n_users=cfg.scenario.n_users, config_hash=cfg.digest(), csv_schema=CSV_SCHEMA,
                   seeds=seeds, **(extra or {}))
    (run_dir / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
    lines = [f"run {run_id}  mode={cfg.run.mode}  objective={cfg.run.objective}  policy={policy}",
             f"{'seed':>6}{'energy J':>14}{'avg latency s':>16}{'feasible':>10}{'violations':>12}"]
    for s in seeds:
        lines.append(f"{s['seed']:>6}{s['energy_J']:>14.6g}{s['latency_s']:>16.6g}"
                     f"{str(bool(s['feasible'])):>10}{s['violations']:>12}")
    text = "\n".join(lines) + "\n"
    (run_dir / "summary.txt").write_text(text)
    print(text, end="")
    return summary


# --------------------------------------------------------------------------
# modes
# --------------------------------------------------------------------------

def run_simulate(cfg: cfgmod.Config, root: Path) -> int:
    run_id, d = _run_dir(cfg, root)
    seeds, rows = [], []
    for seed in cfg.run.seeds:
        ep_rows = []
        for ep in range(max(cfg.run.episodes, 1)):
            res = baselines.run_policy(cfg.scenario, cfg.run.policy, seed=seed, rng_seed=1000 * seed + ep)
            n_viol = sum(1 for t in res["trace"] for v in t["violations"].split(";") if v)
            ep_rows.append(dict(run_id=run_id, seed=seed, episode=ep,
                                reward=float(sum(t["reward"] for t in res["trace"])),
                                energy_J=res["energy_J"], latency_s=res["latency_s"], violations=n_viol))
            if ep == 0:
                _write_trace(d / f"trace_seed{seed}.csv", res["trace"])
                seeds.append(dict(seed=seed, energy_J=res["energy_J"], latency_s=res["latency_s"],
                                  feasible=bool(res["feasible"]), violations=n_viol))
        _write_rows(d / f"metrics_seed{seed}.csv", ep_rows)
        rows += ep_rows
    _summarize(d, run_id, cfg, cfg.run.policy, seeds)
    return 0


def run_train(cfg: cfgmod.Config, root: Path) -> int:
    run_id, d = _run_dir(cfg, root)
    seeds = []
    for seed in cfg.run.seeds:
        tcfg = dataclasses.replace(cfg.train, seed=int(seed))
        result = train(cfg.scenario, tcfg, cfg.run.episodes)
        write_metrics_csv(result.metrics, d / f"metrics_seed{seed}.csv",
                          extra={"schema_version": CSV_SCHEMA, "run_id": run_id, "seed": seed})
        save_checkpoint(d / f"checkpoint_seed{seed}.pt", result.bundle, result.optimizer,
                        cfg.scenario, result.episodes_run)
        ev = evaluate_bundle(cfg.scenario, result.bundle, cfg.scenario.seed)
        seeds.append(dict(seed=seed, energy_J=ev["energy_J"], latency_s=ev["latency_s"],
                          feasible=bool(ev["feasible"]), violations=ev["violations"],
                          episodes=result.episodes_run, wall_s=result.wall_s))
    _summarize(d, run_id, cfg, "learned", seeds)
    return 0


def run_evaluate(cfg: cfgmod.Config, root: Path) -> int:
    bundle, blob = load_checkpoint(cfg.run.checkpoint)
    run_id, d = _run_dir(cfg, root)
    seeds = []
    for seed in cfg.run.seeds:
        ev = evaluate_bundle(cfg.scenario, bundle, seed)
        seeds.append(dict(seed=seed, energy_J=ev["energy_J"], latency_s=ev["latency_s"],
                          feasible=bool(ev["feasible"]), violations=ev["violations"]))
    _summarize(d, run_id, cfg, "learned", seeds, extra={"checkpoint": str(cfg.run.checkpoint),
                                                         "checkpoint_config_hash": blob["config_hash"]})
    return 0


def run_oracle(cfg: cfgmod.Config, root: Path) -> int:
    run_id, d = _run_dir(cfg, root)
    seeds = []
    for seed in cfg.run.seeds:
        res = oracle.brute_force(cfg.scenario, cfg.oracle, seed=seed)
        oracle.write_oracle_csv(res, d / f"oracle_seed{seed}.csv")
        st = res.final_state
        seeds.append(dict(seed=seed, energy_J=st.total_energy,
                          latency_s=float(st.task_latency.sum()) / cfg.scenario.tasks_per_user,
                          feasible=True, violations=0, objective_value=res.objective,
                          candidates=res.n_candidates_evaluated))
    _summarize(d, run_id, cfg, "oracle", seeds)
    return 0


def _sweep_one(args) -> str:
    data, mode, root, label = args
    cfg = cfgmod.from_dict(data)
    cfg = dataclasses.replace(cfg, run=dataclasses.replace(cfg.run, mode=mode))
    MODE_FUNCS[mode](cfg, Path(root) / label)
    return label


def run_sweep(cfg: cfgmod.Config, root: Path) -> int:
    run_id, d = _run_dir(cfg, root)
    base = cfgmod.to_dict(cfg)
    jobs = []
    for v in cfg.run.sweep_values:
        data = cfgmod.set_dotted(base, cfg.run.sweep_key, v)
        jobs.append((data, cfg.run.sweep_mode, str(d), f"{cfg.run.sweep_key.split('.')[-1]}={v}"))
    if cfg.run.workers > 1:
        with concurrent.futures.ProcessPoolExecutor(cfg.run.workers) as pool:
            list(pool.map(_sweep_one, jobs))
    else:
        for job in jobs:
            _sweep_one(job)
    reportmod.report(d)
    print((d / "report_table.txt").read_text(), end="")
    return 0


MODE_FUNCS = {"simulate": run_simulate, "train": run_train, "evaluate": run_evaluate,
              "oracle": run_oracle, "sweep": run_sweep}


# --------------------------------------------------------------------------
# argument handling
# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sagin-mec", description=__doc__)
    sub = p.add_subparsers(dest="mode", required=True)
    for mode in ("simulate", "train", "evaluate", "oracle", "sweep"):
        s = sub.add_parser(mode)
        s.add_argument("--config", help="TOML configuration file (defaults when omitted)")
        s.add_argument("--seed", type=int, action="append", help="seed; repeat for several")
        s.add_argument("--episodes", type=int)
        s.add_argument("--objective", choices=("energy", "latency"))
        s.add_argument("--out", help=f"output root (else ${OUT_ENV}, else run.out)")
        if mode in ("simulate", "sweep"):
            s.add_argument("--policy", choices=cfgmod.POLICIES[:3])
        if mode == "evaluate":
            s.add_argument("--checkpoint")
        if mode == "sweep":
            s.add_argument("--key", help="dotted key to sweep, e.g. scenario.n_users")
            s.add_argument("--values", help="comma-separated values")
            s.add_argument("--sweep-mode", choices=("simulate", "train", "oracle"))
            s.add_argument("--workers", type=int)
    r = sub.add_parser("report")
    r.add_argument("run_dir")
    r.add_argument("--out", help="where to write the report (default: run_dir)")
    return p


def _parse_value(text: str):
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    return text


def resolve_config(args) -> cfgmod.Config:
    data = {}
    if args.config:
        path = Path(args.config)
        try:
            text = path.read_text()
        except OSError as exc:
            raise cfgmod.ConfigError([f"{path}: cannot read ({exc.strerror})"]) from None
        try:
            data = cfgmod.tomllib.loads(text)
        except cfgmod.tomllib.TOMLDecodeError as exc:
            raise cfgmod.ConfigError([f"parse error: {exc}"]) from None
    data = cfgmod.set_dotted(data, "run.mode", args.mode)
    if args.seed:
        data = cfgmod.set_dotted(data, "run.seeds", list(args.seed))
    if args.episodes is not None:
        data = cfgmod.set_dotted(data, "run.episodes", args.episodes)
    if args.objective:
        data = cfgmod.set_dotted(data, "run.objective", args.objective)
        data = cfgmod.set_dotted(data, "scenario.objective", args.objective)
    for attr, key in (("policy", "run.policy"), ("checkpoint", "run.checkpoint"),
                      ("key", "run.sweep_key"), ("sweep_mode", "run.sweep_mode"),
                      ("workers", "run.workers")):
        v = getattr(args, attr, None)
        if v is not None:
            data = cfgmod.set_dotted(data, key, v)
    if getattr(args, "values", None):
        data = cfgmod.set_dotted(data, "run.sweep_values",
                                 [_parse_value(v) for v in args.values.split(",")])
    return cfgmod.from_dict(data)


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        if args.mode == "report":
            rows = reportmod.report(args.run_dir, args.out)
            print(reportmod.format_table(rows), end="")
            return 0
        cfg = resolve_config(args)
        root = _out_root(cfg, args.out)
        return MODE_FUNCS[args.mode](cfg, root)
    except (cfgmod.ConfigError, CheckpointError, reportmod.ReportError, oracle.CapExceeded,
            oracle.InfeasibleEverywhere) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:   # noqa: BLE001 - surface any failure as a nonzero exit with context
        print(f"error: {args.mode} failed: {exc}", file=sys.stderr)
        traceback.print_exc(file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
