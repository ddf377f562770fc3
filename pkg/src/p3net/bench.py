"""Benchmark sweeps over planners and tasks, results.csv I/O and summary reports."""
from __future__ import annotations

import csv
import io
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, P3NetError
from .geometry import path_cost
from .planner import PHASES, NeuralModels, PlannerConfig, p3net_plan
from .rrt import informed_rrt_star, rrt_star
from .seeding import derive_seed

log = logging.getLogger(__name__)

RESULTS_HEADER = "# p3net-results v1"
REPORT_HEADER = "# p3net-report v1"
RESULT_COLUMNS = ("planner", "params", "task", "success", "encode_s", "initial_s", "replan_s", "refine_s",
                  "total_s", "cost", "rel_cost", "pnet_calls", "cc_calls")
REPORT_COLUMNS = ("planner", "params", "n_tasks", "success_rate", "mean_time_s", "median_time_s",
                  "median_rel_cost", "q1_rel_cost", "q3_rel_cost")
NEURAL = ("p3net", "mpnet")
PLANNERS = NEURAL + ("rrt_star", "irrt_star")
TIME_COLUMNS = ("encode_s", "initial_s", "replan_s", "refine_s", "total_s")


@dataclass(frozen=True)
class PlannerVariant:
    name: str
    params: tuple  # sorted (key, value) pairs

    @property
    def label(self) -> str:
        return ";".join(f"{k}={v}" for k, v in self.params)

    def get(self, key, default=None):
        return dict(self.params).get(key, default)


def make_variant(name: str, **params) -> PlannerVariant:
    if name not in PLANNERS:
        raise ValueError(f"unknown planner {name!r}")
    return PlannerVariant(name, tuple(sorted(params.items())))


def planner_grid(planners=PLANNERS, B=(1, 2, 4, 8), I_replan=(10, 20, 50, 100), I=50, I_init=5,
                 I_refine=0, rrt_iters=2000) -> list:
    """Planner configurations of a sweep; MPNet is swept over ``I_replan`` only."""
    variants = []
    for name in planners:
        if name == "p3net":
            variants += [make_variant("p3net", B=b, I=I, I_init=I_init, I_replan=r, I_refine=I_refine)
                      for b in B for r in I_replan]
        elif name == "mpnet":
            variants += [make_variant("mpnet", B=1, I=I, I_init=1, I_replan=r, I_refine=0) for r in I_replan]
        else:
            variants.append(make_variant(name, iters=rrt_iters))
    return variants


@dataclass
class BenchRecord:
    planner: str
    params: str
    task: int
    success: bool
    timing: dict
    cost: float | None
    rel_cost: float | None
    pnet_calls: int
    cc_calls: int

    def row(self) -> list:
        def num(x):
            return "" if x is None else repr(float(x))
        times = [f"{self.timing.get(p, 0.0):.6f}" for p in PHASES]
        total = f"{sum(self.timing.get(p, 0.0) for p in PHASES):.6f}"
        return [self.planner, self.params, str(self.task), str(int(self.success)), *times, total,
                num(self.cost), num(self.rel_cost), str(self.pnet_calls), str(self.cc_calls)]


def run_task(variant: PlannerVariant, task, entry, models: NeuralModels | None, delta: float, seed: int,
             gt_cost: float | None = None):
    """Run one planner on one task; returns ``(BenchRecord, PlanResult)``."""
    ws = entry.workspace
    if variant.name in NEURAL:
        if models is None:
            raise P3NetError("neural planner requested without models")
        cfg = PlannerConfig(B=variant.get("B"), I=variant.get("I"), I_init=variant.get("I_init"),
                            I_replan=variant.get("I_replan"), I_refine=variant.get("I_refine"), delta=delta,
                            seed=seed)
        res = p3net_plan(task.start, task.goal, entry.cloud, ws, cfg, models)
    else:
        fn = informed_rrt_star if variant.name == "irrt_star" else rrt_star
        res = fn(task.start, task.goal, ws, variant.get("iters"), delta=delta, seed=seed)
    if gt_cost is None and task.ground_truth is not None:
        gt_cost = path_cost(task.ground_truth)
    rel = res.cost / gt_cost if res.success and gt_cost else None
    rec = BenchRecord(variant.name, variant.label, task.id, res.success, dict(res.timing), res.cost, rel,
                      res.pnet_calls, res.cc_calls)
    return rec, res


_WORKER = {}


def _init_worker(ds, models, delta, master):
    _WORKER.update(ds=ds, models=models, delta=delta, master=master)


def _work(job):
    variant, tid = job
    ds = _WORKER["ds"]
    task = ds.task(tid)
    return _run_logged(variant, task, ds, _WORKER["models"], _WORKER["delta"], _WORKER["master"])


def task_seed(master: int, task_id: int) -> int:
    """Per-task seed shared by every planner, so planners see the same randomness budget."""
    return derive_seed(master, task_id)


def _run_logged(variant, task, ds, models, delta, master):
    try:
        rec, _ = run_task(variant, task, ds.workspace(task.workspace), models, delta, task_seed(master, task.id))
        return rec
    except (P3NetError, ValueError) as exc:
        log.error("%s %s on task %d failed: %s", variant.name, variant.label, task.id, exc)
        return BenchRecord(variant.name, variant.label, task.id, False, {p: 0.0 for p in PHASES}, None, None, 0, 0)


def run_bench(ds, variants, tasks, models: NeuralModels | None, seed: int = 0, jobs: int = 1,
              delta: float | None = None) -> list:
    """All ``(variant, task)`` pairs; records sorted by (planner, params, task id)."""
    delta = ds.params.get("delta", 0.01) if delta is None else delta
    jobs_list = [(s, t.id) for s in variants for t in tasks]
    if jobs > 1 and len(jobs_list) > 1:
        with ProcessPoolExecutor(jobs, initializer=_init_worker, initargs=(ds, models, delta, seed)) as ex:
            records = list(ex.map(_work, jobs_list, chunksize=4))
    else:
        by_id = {t.id: t for t in tasks}
        records = [_run_logged(s, by_id[tid], ds, models, delta, seed) for s, tid in jobs_list]
    return sorted(records, key=lambda r: (r.planner, r.params, r.task))


def write_results(records, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        f.write(RESULTS_HEADER + "\n")
        w = csv.writer(f, lineterminator="\n")
        w.writerow(RESULT_COLUMNS)
        for r in records:
            w.writerow(r.row())


def read_results(path) -> list:
    """Rows of a results.csv as dicts with typed values."""
    text = Path(path).read_text(encoding="utf-8")
    lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
    if not lines:
        raise FormatError(f"{path}: missing header row")
    reader = csv.DictReader(io.StringIO("\n".join(lines)))
    if tuple(reader.fieldnames or ()) != RESULT_COLUMNS:
        raise FormatError(f"{path}: unexpected columns {reader.fieldnames}")
    rows = []
    for n, raw in enumerate(reader, start=2):
        try:
            row = {"planner": raw["planner"], "params": raw["params"], "task": int(raw["task"]),
                   "success": int(raw["success"])}
            if row["success"] not in (0, 1):
                raise ValueError("success must be 0 or 1")
            for k in TIME_COLUMNS:
                row[k] = float(raw[k])
            for k in ("cost", "rel_cost"):
                row[k] = float(raw[k]) if raw[k] else None
            row["pnet_calls"] = int(raw["pnet_calls"])
            row["cc_calls"] = int(raw["cc_calls"])
        except (TypeError, ValueError) as exc:
            raise FormatError(f"{path}: bad row {n}: {exc}") from exc
        rows.append(row)
    return rows


def summarize(rows) -> list:
    """Per-(planner, params) aggregates; success rate is a percentage.

    Times are over all tasks; relative-cost quantiles over successful tasks
    with a ground truth (linear interpolation between order statistics).
    """
    groups = {}
    for r in rows:
        groups.setdefault((r["planner"], r["params"]), []).append(r)
    out = []
    for (planner, params), rs in sorted(groups.items()):
        times = np.array([r["total_s"] for r in rs])
        rel = np.array([r["rel_cost"] for r in rs if r["success"] and r["rel_cost"] is not None])
        q1, med, q3 = np.percentile(rel, [25, 50, 75]) if rel.size else (math.nan,) * 3
        out.append({
            "planner": planner, "params": params, "n_tasks": len(rs),
            "success_rate": 100.0 * sum(r["success"] for r in rs) / len(rs),
            "mean_time_s": float(times.mean()), "median_time_s": float(np.median(times)),
            "median_rel_cost": float(med), "q1_rel_cost": float(q1), "q3_rel_cost": float(q3),
        })
    return out


def write_report(summary, f) -> None:
    f.write(REPORT_HEADER + "\n")
    w = csv.writer(f, lineterminator="\n")
    w.writerow(REPORT_COLUMNS)
    for s in summary:
        w.writerow([s[c] if isinstance(s[c], (str, int)) else ("" if math.isnan(s[c]) else f"{s[c]:.6g}")
                    for c in REPORT_COLUMNS])
