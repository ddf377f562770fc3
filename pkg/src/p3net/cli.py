"""``p3net`` command-line driver: gen | train | plan | bench | report.

Every option can also come from a UTF-8 JSON file given with ``--config``;
its keys are the option names with dashes replaced by underscores, and
explicit flags win over the file. Exit codes: 0 ok, 1 runtime error,
2 usage error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import zipfile
from pathlib import Path

import numpy as np

from .bench import (PLANNERS, make_variant, planner_grid, read_results, run_bench, run_task, summarize,
                    write_report, write_results)
from .datagen import (DESK_GT_ITERS, PlanningTask, WorkspaceEntry, WorkspaceRecipe, build_dataset,
                      dataset_read, dataset_write, training_set)
from .errors import FormatError, P3NetError
from .geometry import Workspace
from .nn import EncoderModel, PlannerModel, load_model, save_model
from .nn.train import make_optimizer, train
from .planner import PHASES, NeuralModels
from .rrt import ground_truth

log = logging.getLogger("p3net")

LOSS_HEADER = "# p3net-loss-curve v1"
ENCODER_FILE, PLANNER_FILE, STATE_FILE, LOSS_FILE = "encoder.p3nm", "planner.p3nm", "train_state.npz", \
    "loss_curve.csv"

DEFAULTS = {
    "gen": dict(dim=2, hard=False, n_workspaces=10, tasks_per_ws=100, seen_tasks=20, unseen_workspaces=3,
                unseen_tasks=20, gt_iters=DESK_GT_ITERS, delta=0.01, cloud_size=None),
    "train": dict(data=None, epochs=50, batch_size=128, lr=1e-3, resume=False),
    "plan": dict(data=None, models=None, task=None, start=None, goal=None, planner="p3net", B=4, I=50,
                 I_init=5, I_replan=50, I_refine=0, rrt_iters=2000, delta=0.01, path_csv=None,
                 gt_iters=DESK_GT_ITERS),
    "bench": dict(data=None, models=None, split="seen", planners=",".join(PLANNERS), B="1,2,4,8",
                  I_replan="10,20,50,100", I=50, I_init=5, I_refine=0, rrt_iters=2000, max_tasks=None),
    "report": dict(results=None),
}
COMMON = dict(seed=0, jobs=1, fixed_point=False, out=None)


class UsageError(Exception):
    pass


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    S = argparse.SUPPRESS
    common.add_argument("--config", help="JSON file with option values")
    common.add_argument("--seed", type=int, default=S, help="master seed (u64)")
    common.add_argument("--jobs", type=int, default=S, help="worker processes")
    common.add_argument("--fixed-point", action="store_true", default=S, help="Q16.16 inference")
    common.add_argument("--out", default=S, help="output directory (report: output file)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="p3net", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="cmd", required=True)

    g = sub.add_parser("gen", parents=[common], help="generate a dataset")
    g.add_argument("--dim", type=int, default=S)
    g.add_argument("--hard", action="store_true", default=S, help="double the obstacle count")
    g.add_argument("--n-workspaces", type=int, default=S)
    g.add_argument("--tasks-per-ws", type=int, default=S)
    g.add_argument("--seen-tasks", type=int, default=S, help="seen-split tasks per training workspace")
    g.add_argument("--unseen-workspaces", type=int, default=S)
    g.add_argument("--unseen-tasks", type=int, default=S, help="tasks per unseen workspace")
    g.add_argument("--gt-iters", type=int, default=S, help="RRT* iterations for ground truth")
    g.add_argument("--delta", type=float, default=S)
    g.add_argument("--cloud-size", type=int, default=S)

    t = sub.add_parser("train", parents=[common], help="train encoder + planner")
    t.add_argument("--data", default=S, help="dataset directory")
    t.add_argument("--epochs", type=int, default=S)
    t.add_argument("--batch-size", type=int, default=S)
    t.add_argument("--lr", type=float, default=S)
    t.add_argument("--resume", action="store_true", default=S, help="continue from checkpoints in --out")

    pl = sub.add_parser("plan", parents=[common], help="plan a single task")
    pl.add_argument("--data", default=S)
    pl.add_argument("--models", default=S, help="directory with encoder.p3nm / planner.p3nm")
    pl.add_argument("--task", type=int, default=S, help="task id in the dataset")
    pl.add_argument("--start", default=S, help="comma-separated coordinates (obstacle-free world)")
    pl.add_argument("--goal", default=S)
    pl.add_argument("--planner", choices=PLANNERS, default=S)
    _planner_flags(pl, S)
    pl.add_argument("--B", type=int, default=S)
    pl.add_argument("--I-replan", dest="I_replan", type=int, default=S)
    pl.add_argument("--delta", type=float, default=S)
    pl.add_argument("--gt-iters", type=int, default=S)
    pl.add_argument("--path-csv", default=S, help="write waypoints here")

    b = sub.add_parser("bench", parents=[common], help="sweep planners over a split")
    b.add_argument("--data", default=S)
    b.add_argument("--models", default=S)
    b.add_argument("--split", choices=("train", "seen", "unseen"), default=S)
    b.add_argument("--planners", default=S, help="comma-separated subset of " + ",".join(PLANNERS))
    b.add_argument("--B", default=S, help="comma-separated batch sizes")
    b.add_argument("--I-replan", dest="I_replan", default=S, help="comma-separated replan budgets")
    _planner_flags(b, S)
    b.add_argument("--max-tasks", type=int, default=S)

    r = sub.add_parser("report", parents=[common], help="summarize a results.csv")
    r.add_argument("results", nargs="?", default=S)
    return p


def _planner_flags(p, S):
    p.add_argument("--I", type=int, default=S, help="iterations per neural planning call")
    p.add_argument("--I-init", dest="I_init", type=int, default=S)
    p.add_argument("--I-refine", dest="I_refine", type=int, default=S)
    p.add_argument("--rrt-iters", type=int, default=S)


def resolve(args: argparse.Namespace) -> dict:
    """Defaults, then the config file, then explicit flags."""
    cfg = {**COMMON, **DEFAULTS[args.cmd]}
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(data, dict):
            raise UsageError("config must be a JSON object")
        unknown = set(data) - set(cfg)
        if unknown:
            raise UsageError(f"unknown config keys for {args.cmd}: {sorted(unknown)}")
        cfg.update(data)
    cfg.update({k: v for k, v in vars(args).items() if k in cfg})
    if cfg["jobs"] < 1:
        raise UsageError("--jobs must be >= 1")
    if not 0 <= cfg["seed"] < 2**64:
        raise UsageError("--seed must be an unsigned 64-bit integer")
    return cfg


def _need(cfg, *keys):
    for k in keys:
        if cfg.get(k) is None:
            raise UsageError(f"--{k.replace('_', '-')} is required")


def _ints(text) -> list:
    if isinstance(text, (list, tuple)):
        return [int(x) for x in text]
    if isinstance(text, int):
        return [text]
    try:
        return [int(x) for x in str(text).split(",") if x.strip()]
    except ValueError as exc:
        raise UsageError(f"bad integer list {text!r}") from exc


def _point(text, name) -> np.ndarray:
    try:
        vals = text if isinstance(text, (list, tuple)) else [float(x) for x in str(text).split(",")]
        return np.array(vals, dtype=np.float64)
    except ValueError as exc:
        raise UsageError(f"bad --{name} {text!r}") from exc


def _load_models(models_dir, fixed_point=False) -> NeuralModels:
    d = Path(models_dir)
    return NeuralModels(load_model(d / ENCODER_FILE), load_model(d / PLANNER_FILE), fixed_point=fixed_point)


def cmd_gen(cfg) -> int:
    _need(cfg, "out")
    if cfg["dim"] not in (2, 3):
        raise UsageError(f"--dim must be 2 or 3, got {cfg['dim']}")
    recipe = WorkspaceRecipe(dim=cfg["dim"], hard_mode=bool(cfg["hard"]))
    ds = build_dataset(recipe, n_workspaces=cfg["n_workspaces"], tasks_per_ws=cfg["tasks_per_ws"],
                       seen_tasks_per_ws=cfg["seen_tasks"], n_unseen_ws=cfg["unseen_workspaces"],
                       unseen_tasks_per_ws=cfg["unseen_tasks"], seed=cfg["seed"], delta=cfg["delta"],
                       gt_iters=cfg["gt_iters"], cloud_size=cfg["cloud_size"])
    dataset_write(ds, cfg["out"])
    counts = {s: len(ds.split_tasks(s)) for s in ("train", "seen", "unseen")}
    print(f"wrote {cfg['out']}: {len(ds.workspaces)} workspaces, {recipe.n_obstacles} obstacles each, "
          f"tasks train={counts['train']} seen={counts['seen']} unseen={counts['unseen']}")
    return 0


def cmd_train(cfg) -> int:
    _need(cfg, "data", "out")
    ds = dataset_read(cfg["data"])
    data = training_set(ds, "train")
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    dim, seed = ds.recipe.dim, cfg["seed"]
    start_epoch, curve = 0, []
    if cfg["resume"]:
        encoder, planner = load_model(out / ENCODER_FILE), load_model(out / PLANNER_FILE)
        opt = make_optimizer(encoder, planner, cfg["lr"])
        try:
            with np.load(out / STATE_FILE) as st:
                opt.load_state(st)
                start_epoch = int(st["epoch"])
        except (zipfile.BadZipFile, KeyError, EOFError) as exc:
            raise FormatError(f"{out / STATE_FILE}: unreadable training state ({exc})") from exc
        curve = _read_loss_curve(out / LOSS_FILE)[:start_epoch]
    else:
        encoder = EncoderModel(dim, seed=seed)
        planner = PlannerModel(dim, feature_dim=encoder.feature_dim, seed=seed + 1)
        opt = make_optimizer(encoder, planner, cfg["lr"])

    def checkpoint(epoch, loss):
        curve.append(loss)
        save_model(encoder, out / ENCODER_FILE)
        save_model(planner, out / PLANNER_FILE)
        np.savez(out / STATE_FILE, epoch=np.array(epoch + 1), **opt.state())
        _write_loss_curve(out / LOSS_FILE, curve)
        print(f"epoch {epoch + 1}: loss {loss:.6f}")

    train(encoder, planner, data, epochs=cfg["epochs"], batch_size=cfg["batch_size"], seed=seed, lr=cfg["lr"],
          start_epoch=start_epoch, optimizer=opt, on_epoch=checkpoint)
    # final save carries the refreshed inference caches
    save_model(encoder, out / ENCODER_FILE)
    save_model(planner, out / PLANNER_FILE)
    return 0


def _write_loss_curve(path, curve) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        f.write(LOSS_HEADER + "\n")
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["epoch", "loss"])
        for i, v in enumerate(curve, start=1):
            w.writerow([i, repr(float(v))])


def _read_loss_curve(path) -> list:
    rows = [ln for ln in Path(path).read_text(encoding="utf-8").splitlines() if ln and not ln.startswith("#")]
    return [float(r.split(",")[1]) for r in rows[1:]]


def _synthetic_task(cfg):
    start, goal = _point(cfg["start"], "start"), _point(cfg["goal"], "goal")
    if start.size != goal.size or start.size not in (2, 3):
        raise UsageError("--start and --goal need the same dimension, 2 or 3")
    side = WorkspaceRecipe().world_side
    ws = Workspace.from_boxes(np.zeros(start.size), np.full(start.size, side))
    if not (ws.bounds.contains(start) and ws.bounds.contains(goal)):
        raise UsageError(f"--start/--goal must lie inside [0, {side}]^{start.size}")
    # no obstacles, so the cloud is empty
    entry = WorkspaceEntry(0, "synthetic", ws, np.zeros((0, start.size), np.float32), 0)
    gt = ground_truth(start, goal, ws, cfg["delta"], seed=cfg["seed"], iters=cfg["gt_iters"])
    return PlanningTask(0, 0, start, goal, "synthetic", gt), entry


def cmd_plan(cfg) -> int:
    if cfg["task"] is not None:
        _need(cfg, "data")
        ds = dataset_read(cfg["data"])
        try:
            task = ds.task(cfg["task"])
        except KeyError as exc:
            raise P3NetError(f"unknown task id {cfg['task']}") from exc
        entry = ds.workspace(task.workspace)
    elif cfg["start"] is not None and cfg["goal"] is not None:
        task, entry = _synthetic_task(cfg)
    else:
        raise UsageError("give --task or both --start and --goal")
    name = cfg["planner"]
    models = None
    if name in ("p3net", "mpnet"):
        if cfg["models"] is not None:
            models = _load_models(cfg["models"], cfg["fixed_point"])
        elif task.split == "synthetic":
            # obstacle-free world: untrained networks are never consulted for straight-line tasks
            enc = EncoderModel(task.start.size, seed=cfg["seed"])
            models = NeuralModels(enc, PlannerModel(task.start.size, seed=cfg["seed"]), cfg["fixed_point"])
        else:
            raise UsageError("--models is required for neural planners")
    if name == "p3net":
        variant = make_variant(name, B=cfg["B"], I=cfg["I"], I_init=cfg["I_init"], I_replan=cfg["I_replan"],
                         I_refine=cfg["I_refine"])
    elif name == "mpnet":
        variant = make_variant(name, B=1, I=cfg["I"], I_init=1, I_replan=cfg["I_replan"], I_refine=0)
    else:
        variant = make_variant(name, iters=cfg["rrt_iters"])
    rec, res = run_task(variant, task, entry, models, cfg["delta"], cfg["seed"])
    print(f"planner: {name} ({variant.label})")
    print(f"task: {task.id}")
    print(f"success: {int(rec.success)}")
    print(f"cost: {rec.cost if rec.cost is not None else 'n/a'}")
    print(f"rel_cost: {rec.rel_cost if rec.rel_cost is not None else 'n/a'}")
    for p in PHASES:
        print(f"{p}_s: {rec.timing.get(p, 0.0):.6f}")
    print(f"pnet_calls: {rec.pnet_calls}")
    print(f"cc_calls: {rec.cc_calls}")
    if cfg["path_csv"] and res.path is not None:
        cols = "xyz"[:task.start.size]
        with open(cfg["path_csv"], "w", newline="", encoding="utf-8") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(list(cols))
            w.writerows([[repr(float(v)) for v in p] for p in res.path])
    return 0


def cmd_bench(cfg) -> int:
    _need(cfg, "data", "out")
    planners = [p for p in str(cfg["planners"]).split(",") if p] if not isinstance(cfg["planners"], list) \
        else cfg["planners"]
    bad = set(planners) - set(PLANNERS)
    if bad:
        raise UsageError(f"unknown planners {sorted(bad)}")
    ds = dataset_read(cfg["data"])
    models = None
    if any(p in ("p3net", "mpnet") for p in planners):
        _need(cfg, "models")
        models = _load_models(cfg["models"], cfg["fixed_point"])
    variants = planner_grid(planners, B=_ints(cfg["B"]), I_replan=_ints(cfg["I_replan"]), I=cfg["I"],
                         I_init=cfg["I_init"], I_refine=cfg["I_refine"], rrt_iters=cfg["rrt_iters"])
    tasks = ds.split_tasks(cfg["split"])
    if cfg["max_tasks"] is not None:
        tasks = tasks[:cfg["max_tasks"]]
    records = run_bench(ds, variants, tasks, models, seed=cfg["seed"], jobs=cfg["jobs"])
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    write_results(records, out / "results.csv")
    print(f"wrote {out / 'results.csv'}: {len(records)} rows ({len(variants)} planners x {len(tasks)} tasks)")
    return 0


def cmd_report(cfg) -> int:
    _need(cfg, "results")
    summary = summarize(read_results(cfg["results"]))
    if cfg["out"]:
        with open(cfg["out"], "w", newline="", encoding="utf-8") as f:
            write_report(summary, f)
    else:
        write_report(summary, sys.stdout)
    return 0


COMMANDS = {"gen": cmd_gen, "train": cmd_train, "plan": cmd_plan, "bench": cmd_bench, "report": cmd_report}


def main(argv=None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.cmd](resolve(args))
    except UsageError as exc:
        print(f"p3net {args.cmd}: error: {exc}", file=sys.stderr)
        return 2
    except (P3NetError, OSError, ValueError) as exc:
        print(f"p3net {args.cmd}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
