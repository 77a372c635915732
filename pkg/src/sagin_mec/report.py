"""Aggregate run summaries into comparison tables and plot-ready series."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np


class ReportError(RuntimeError):
    pass


def _quantiles(values: list[float]) -> tuple[float, float, float]:
    arr = np.asarray(values, dtype=float)
    q1, med, q3 = np.percentile(arr, [25, 50, 75])
    return float(med), float(q1), float(q3)


def collect_summaries(run_dir) -> list[dict]:
    run_dir = Path(run_dir)
    if not run_dir.is_dir():
        raise ReportError(f"{run_dir} is not a directory")
    found = [json.loads(p.read_text()) for p in sorted(run_dir.rglob("summary.json"))]
    if not found:
        raise ReportError(f"no completed runs (summary.json) under {run_dir}")
    return found


def aggregate(summaries: list[dict]) -> list[dict]:
    objectives = {s["objective"] for s in summaries}
    if len(objectives) > 1:
        raise ReportError(f"cannot mix objectives {sorted(objectives)} in one table")
    groups: dict[tuple, list[dict]] = {}
    for s in summaries:
        groups.setdefault((s["policy"], int(s["n_users"])), []).extend(s["seeds"])
    rows = []
    for (policy, n_users), seeds in sorted(groups.items()):
        e_med, e_q1, e_q3 = _quantiles([r["energy_J"] for r in seeds])
        l_med, l_q1, l_q3 = _quantiles([r["latency_s"] for r in seeds])
        rows.append(dict(policy=policy, n_users=n_users, n_seeds=len(seeds),
                         energy_median_J=e_med, energy_q1_J=e_q1, energy_q3_J=e_q3,
                         latency_median_s=l_med, latency_q1_s=l_q1, latency_q3_s=l_q3,
                         feasible_frac=float(np.mean([bool(r["feasible"]) for r in seeds]))))
    return rows


def format_table(rows: list[dict]) -> str:
    head = f"{'policy':<12}{'M':>4}{'seeds':>7}{'energy J (median [IQR])':>32}{'latency s (median [IQR])':>32}{'feasible':>10}"
    lines = [head, "-" * len(head)]
    for r in rows:
        e = f"{r['energy_median_J']:.4g} [{r['energy_q1_J']:.4g}, {r['energy_q3_J']:.4g}]"
        l = f"{r['latency_median_s']:.4g} [{r['latency_q1_s']:.4g}, {r['latency_q3_s']:.4g}]"
        lines.append(f"{r['policy']:<12}{r['n_users']:>4}{r['n_seeds']:>7}{e:>32}{l:>32}{r['feasible_frac']:>10.2f}")
    return "\n".join(lines) + "\n"


def report(run_dir, out_dir=None) -> list[dict]:
    """Write ``report_table.txt``, ``energy_vs_M.csv`` and ``latency_vs_M.csv``."""
    rows = aggregate(collect_summaries(run_dir))
    out = Path(out_dir or run_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report_table.txt").write_text(format_table(rows))
    for metric, fname in (("energy", "energy_vs_M.csv"), ("latency", "latency_vs_M.csv")):
        unit = "J" if metric == "energy" else "s"
        with (out / fname).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["policy", "n_users", f"median_{unit}", f"q1_{unit}", f"q3_{unit}"])
            for r in rows:
                w.writerow([r["policy"], r["n_users"], repr(r[f"{metric}_median_{unit}"]),
                            repr(r[f"{metric}_q1_{unit}"]), repr(r[f"{metric}_q3_{unit}"])])
    return rows


def finite_or_nan(x: float) -> float:
    return x if math.isfinite(x) else math.nan
